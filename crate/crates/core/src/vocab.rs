//! The 32-token vocabulary shared by the decoder and the benchmark.

pub const VOCAB_SIZE: usize = 32;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const SEP: usize = 3;

/// Instruction tokens, one per task (ER, CTC, CMD, DS).
pub const TASK_TOKENS: [usize; 4] = [4, 5, 6, 7];
/// Class answers `C0..C3`.
pub const CLASS_TOKENS: [usize; 4] = [8, 9, 10, 11];
pub const RISK: usize = 12;
pub const SAFE: usize = 13;
/// Summary symbols `S0..S3`.
pub const SYMBOL_TOKENS: [usize; 4] = [14, 15, 16, 17];
/// Filler tokens used only by the copy corpus.
pub const GENERIC_START: usize = 18;
pub const NUM_GENERIC: usize = 14;

/// Tokens a copy sequence may contain: every answer-bearing token plus the
/// generic filler, so the pretrained head can emit all of them.
pub fn copy_alphabet() -> Vec<usize> {
    (CLASS_TOKENS[0]..VOCAB_SIZE).collect()
}

/// Tokens that may separate source from copy during pretraining.
pub fn copy_separators() -> Vec<usize> {
    let mut s = vec![SEP];
    s.extend_from_slice(&TASK_TOKENS);
    s
}

pub fn token_name(id: usize) -> String {
    match id {
        PAD => "PAD".into(),
        BOS => "BOS".into(),
        EOS => "EOS".into(),
        SEP => "SEP".into(),
        4 => "T_ER".into(),
        5 => "T_CTC".into(),
        6 => "T_CMD".into(),
        7 => "T_DS".into(),
        8..=11 => format!("C{}", id - 8),
        RISK => "RISK".into(),
        SAFE => "SAFE".into(),
        14..=17 => format!("S{}", id - 14),
        18..=31 => format!("G{}", id - 18),
        _ => format!("?{id}"),
    }
}
