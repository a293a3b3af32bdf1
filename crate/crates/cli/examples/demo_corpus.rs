//! Writes the 200-document demo corpus used by `demo/config.toml`.
//!
//! `cargo run -p chronotopic-cli --example demo_corpus [out.jsonl]`

use std::io::{BufWriter, Write};

use chrono::NaiveDate;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chronotopic::corpus::RawDocument;

const INSULIN: &[&str] = &["insulin", "glucose", "resistance", "pancreatic", "secretion", "glycemic", "fasting", "hyperglycemia"];
const ADIPOSE: &[&str] = &["adipose", "obesity", "waist", "visceral", "lipid", "triglyceride", "cholesterol", "adipokine"];
const VASCULAR: &[&str] = &["hypertension", "arterial", "endothelial", "pressure", "stiffness", "vascular", "cardiac", "stroke"];
// from 2003 the inflammation vocabulary drifts into two separate literatures
const INFLAMMATION: &[&str] = &["inflammation", "cytokine", "macrophage", "interleukin", "microbiota", "gut", "bacterial", "intestinal"];
const DIET: &[&str] = &["diet", "exercise", "lifestyle", "intervention", "nutrition", "caloric", "physical", "weight"];

fn themes(year: i32) -> Vec<&'static [&'static str]> {
    match year {
        2000 => vec![INSULIN, ADIPOSE, VASCULAR],
        2001 => vec![INSULIN, ADIPOSE, VASCULAR, INFLAMMATION],
        2002 => vec![INSULIN, ADIPOSE, INFLAMMATION, DIET],
        _ => vec![INSULIN, ADIPOSE, &INFLAMMATION[..4], &INFLAMMATION[4..], DIET],
    }
}

fn main() -> std::io::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "demo/corpus.jsonl".into());
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut w = BufWriter::new(std::fs::File::create(&out)?);
    let mut n = 0;
    for year in 2000..2004 {
        let themes = themes(year);
        for d in 0..50 {
            let main = themes[d % themes.len()];
            let side = *themes.choose(&mut rng).expect("themes");
            let words: Vec<&str> = (0..40)
                .map(|_| {
                    let theme = if rng.random_bool(0.85) { main } else { side };
                    *theme.choose(&mut rng).expect("words")
                })
                .collect();
            let doc = RawDocument {
                id: format!("doc-{year}-{d:02}"),
                timestamp: NaiveDate::from_ymd_opt(year, (d % 12) as u32 + 1, (d % 28) as u32 + 1).expect("date"),
                title: None,
                body: words.join(" "),
            };
            writeln!(w, "{}", serde_json::to_string(&doc)?)?;
            n += 1;
        }
    }
    w.flush()?;
    eprintln!("wrote {n} documents to {out}");
    Ok(())
}
