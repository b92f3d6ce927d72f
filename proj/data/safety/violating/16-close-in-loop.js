app.editor.tabs.forEach(t => {
  if (!t.active) app.editor.closeTab(t.id);
});
