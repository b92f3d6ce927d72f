app.library.search('Hotel California');
