app.player.next();
