app.editor.openTab();
