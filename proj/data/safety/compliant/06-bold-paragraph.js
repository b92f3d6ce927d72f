const ps = app.editor.activeDocument.paragraphs;
ps[1] = '**' + ps[1] + '**';
app.editor.activeDocument.paragraphs = ps;
