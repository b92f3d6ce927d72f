const src = app.editor.activeDocument;
app.editor.openTab('Copy of ' + src.title, src.paragraphs.slice(0, 3));
