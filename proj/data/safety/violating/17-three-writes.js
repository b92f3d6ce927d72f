app.player.volume = 0.1;
app.editor.fontSize = 30;
app.editor.activeDocument.paragraphs = [];
