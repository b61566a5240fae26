//! Regenerates the committed refrigerant saturation table from the
//! correlation set. Writes to the path given as the first argument, or to
//! stdout when none is given.

use std::io::Write;

fn main() {
    let text = tescycle::thermo::correlations::generate_table_text();
    match std::env::args().nth(1) {
        Some(path) => std::fs::write(&path, text).unwrap_or_else(|e| {
            eprintln!("cannot write {path}: {e}");
            std::process::exit(1);
        }),
        None => std::io::stdout().write_all(text.as_bytes()).unwrap(),
    }
}
