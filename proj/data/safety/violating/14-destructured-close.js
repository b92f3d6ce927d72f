const { closeTab, tabs } = app.editor;
for (const t of tabs) closeTab(t.id);
