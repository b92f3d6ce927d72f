const ed = app.editor;
ed.closeOtherTabs();
