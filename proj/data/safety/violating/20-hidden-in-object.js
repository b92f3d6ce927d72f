const holder = { target: app.editor };
holder.target.closeOtherTabs();
