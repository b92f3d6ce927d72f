const name = 'close' + 'OtherTabs';
app.editor[name]();
