app.editor.closeTab(app.editor.activeTab);
