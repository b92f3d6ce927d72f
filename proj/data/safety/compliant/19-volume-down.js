app.player.volume = Math.max(0, app.player.volume - 0.1);
