app.library.history().slice(-3).forEach(h => console.log(h.track.title));
