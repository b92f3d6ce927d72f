setTimeout(() => app.player.next(), 10);
