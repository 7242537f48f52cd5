//! Synthetic multi-task benchmark: emotion recognition (ER), technique
//! classification (CTC), crisis detection (CMD) and summarization (DS).

mod generate;
mod io;
mod metrics;

pub use generate::{
    gen_split, gen_task, Dataset, GenerationParams, Label, Split, Task, TaskExample,
    CTC_CARRIERS_HZ, DS_NUM_CHIRPS, DS_START_HZ, ER_MOD_RATES_HZ,
};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, DATASET_FORMAT_VERSION};
pub use metrics::{accuracy, lcs_len, macro_f1, precision_at_k, rouge_l};
