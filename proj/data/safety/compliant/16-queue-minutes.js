const total = app.player.queue.reduce((s, t) => s + t.duration, 0);
console.log(Math.round(total / 60) + ' min');
