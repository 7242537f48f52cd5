//! JSON-lines dataset files.
//!
//! Line 1 is a header `{format_version, task, split, seed, generation_params}`;
//! every following line is one example
//! `{task, sample_rate_hz, audio, instruction_ids, target_ids, label}`.
//! Audio samples carry 9 significant digits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoders::AudioSegment;
use crate::error::{Result, WeeError};
use crate::taskbench::generate::round_sig9;
use crate::taskbench::{Dataset, GenerationParams, Label, Split, Task, TaskExample};

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    task: Task,
    split: Split,
    seed: u64,
    generation_params: GenerationParams,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    task: Task,
    sample_rate_hz: u32,
    audio: Vec<f64>,
    instruction_ids: Vec<usize>,
    target_ids: Vec<usize>,
    label: Label,
}

pub fn write_dataset<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    let header = Header {
        format_version: DATASET_FORMAT_VERSION,
        task: ds.task,
        split: ds.split,
        seed: ds.seed,
        generation_params: ds.generation_params.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for ex in &ds.examples {
        let rec = Record {
            task: ex.task,
            sample_rate_hz: ex.audio.sample_rate_hz(),
            audio: ex.audio.samples().iter().map(|&v| round_sig9(v)).collect(),
            instruction_ids: ex.instruction_ids.clone(),
            target_ids: ex.target_ids.clone(),
            label: ex.label.clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<Dataset> {
    let mut lines = r.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| WeeError::InvalidInput("empty dataset file".into()))??;
    let header: Header = serde_json::from_str(&header_line)?;
    if header.format_version != DATASET_FORMAT_VERSION {
        return Err(WeeError::InvalidInput(format!(
            "unsupported dataset format version {}",
            header.format_version
        )));
    }
    let mut examples = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)?;
        if rec.task != header.task {
            return Err(WeeError::InvalidInput(format!(
                "record task {} in a {} dataset",
                rec.task, header.task
            )));
        }
        if rec.label.target_ids() != rec.target_ids {
            return Err(WeeError::InvalidInput(
                "target_ids inconsistent with label".into(),
            ));
        }
        examples.push(TaskExample {
            task: rec.task,
            audio: AudioSegment::new(rec.audio, rec.sample_rate_hz)?,
            instruction_ids: rec.instruction_ids,
            target_ids: rec.target_ids,
            label: rec.label,
        });
    }
    Ok(Dataset {
        task: header.task,
        split: header.split,
        seed: header.seed,
        generation_params: header.generation_params,
        examples,
    })
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    write_dataset(ds, BufWriter::new(File::create(path)?))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskbench::gen_task;

    #[test]
    fn round_trip_is_exact() {
        for task in Task::ALL {
            let ds = gen_task(task, 4, 21).unwrap();
            let mut buf = Vec::new();
            write_dataset(&ds, &mut buf).unwrap();
            let back = read_dataset(&buf[..]).unwrap();
            assert_eq!(back, ds);
        }
    }

    #[test]
    fn header_and_record_fields() {
        let ds = gen_task(Task::Cmd, 1, 2).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
        assert_eq!(header["format_version"], 1);
        assert_eq!(header["seed"], 2);
        assert!(header["generation_params"].is_object());
        let rec: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
        for key in ["task", "sample_rate_hz", "audio", "instruction_ids", "target_ids", "label"] {
            assert!(rec.get(key).is_some(), "missing {key}");
        }
        assert_eq!(rec["task"], "CMD");
    }

    #[test]
    fn rejects_inconsistent_label() {
        let ds = gen_task(Task::Er, 1, 2).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut rec: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
        rec["target_ids"] = serde_json::json!([2]);
        lines[1] = rec.to_string();
        assert!(read_dataset(lines.join("\n").as_bytes()).is_err());
    }
}
