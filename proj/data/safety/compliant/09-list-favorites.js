console.log(JSON.stringify(app.library.favorites().map(t => t.title)));
