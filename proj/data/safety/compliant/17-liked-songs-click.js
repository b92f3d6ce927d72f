app.ui.navigate('library');
app.ui.find('Liked Songs')[0].click();
