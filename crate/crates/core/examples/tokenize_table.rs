//! Whole-form tokenization next to greedy wordpiece on words that wordpiece
//! splits at punctuation.
//!
//! `cargo run --example tokenize_table`

use anna::tokenizer::{tokenize, wordpiece_tokenize, EntryKind, TokenizerOptions, Vocabulary};

fn main() -> anna::Result<()> {
    use EntryKind::*;
    let whole = ["Sant'Egidio", "COVID-19", "U.S.", "Ph.D.", "l'amour", "non-profit", "X-Files", "UTF-16", "C++"];
    let starts = [
        "Sant", "'", "E", "CO", "-", "19", "U", ".", "S", "Ph", "D", "l", "am", "non", "profit", "X", "Files", "16", "C", "+",
    ];
    let conts = ["##gi", "##dio", "##VI", "##D", "##our", "##TF"];
    let vocab = Vocabulary::from_entries(
        whole
            .iter()
            .map(|s| (*s, Whole))
            .chain(starts.iter().map(|s| (*s, SubwordStart)))
            .chain(conts.iter().map(|s| (*s, SubwordCont))),
        0.7,
    )?;
    let o = TokenizerOptions::default();
    println!("{:<14} {:<16} wordpiece", "word", "whole-form");
    for w in whole {
        let a = tokenize(w, &vocab, o).surfaces.join(" ");
        let b = wordpiece_tokenize(w, &vocab, o).surfaces.join(" ");
        println!("{w:<14} {a:<16} {b}");
    }
    let sentence = "The U.S. non-profit studied COVID-19 in C++.";
    println!("\n{sentence}\n  whole-form: {:?}", tokenize(sentence, &vocab, o).surfaces);
    Ok(())
}
