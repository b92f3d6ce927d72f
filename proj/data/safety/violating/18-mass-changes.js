for (let i = 0; i < 3; i++) app.player.next();
app.ui.navigate('library');
app.player.volume = 0;
