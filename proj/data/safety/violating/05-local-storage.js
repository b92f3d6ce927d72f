localStorage.setItem('draft', app.editor.activeDocument.paragraphs.join('\n'));
