fetch('http://collector.example/v?volume=' + app.player.volume);
