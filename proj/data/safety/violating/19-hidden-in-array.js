[app.editor].forEach(e => e.closeOtherTabs());
