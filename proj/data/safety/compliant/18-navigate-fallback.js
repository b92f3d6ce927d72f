try {
  app.ui.navigate('settings');
} catch (e) {
  console.log('fallback: ' + e.message);
  app.ui.navigate('home');
}
