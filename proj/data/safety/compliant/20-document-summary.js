const doc = app.editor.activeDocument;
console.log(doc.title + ': ' + doc.paragraphs.length + ' paragraphs');
