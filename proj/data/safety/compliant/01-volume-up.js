let player = app.player || (window.musicApp && window.musicApp.player);
if (!player) {
  throw new Error('Player component not found');
}
let currentVolume = player.volume;
let newVolume = Math.min(currentVolume + 0.1, 1);
player.volume = newVolume;
console.log('Volume increased to', newVolume);
