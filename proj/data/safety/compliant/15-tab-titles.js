for (const t of app.editor.tabs) console.log(t.title);
