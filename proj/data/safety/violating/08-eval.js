eval('app.editor.closeOtherTabs()');
