app.player.volume = (Date.now() % 100) / 100;
