const q = app.player.queue;
console.log(q.length);
