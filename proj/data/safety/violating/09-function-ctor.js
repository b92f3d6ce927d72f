const g = Function('return this')();
g.app.player.volume = 1;
