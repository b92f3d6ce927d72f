app.player.previous();
console.log(app.player.currentTrack.title);
