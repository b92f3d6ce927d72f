const key = 'volume';
console.log(app.player[key]);
