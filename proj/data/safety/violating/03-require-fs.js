require('fs').writeFileSync('/tmp/notes.md', app.editor.activeDocument.paragraphs.join('\n'));
