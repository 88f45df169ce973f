//! On-disk formats: the binary IF dump with its sidecar, the dataset and
//! model files, bearing-list text files, and CSV emission.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::{
    ClassifierModel, SignalLabel, SpectrumFeature, TrainingMetadata, SPECTRUM_BINS,
};
use crate::classify::cnn::{Conv1d, Dense};
use crate::frontend::{IfRecord, PowerSeries, ProbeSignal};
use crate::localize::{AnchorObservation, BearingObservation};
use crate::real::Real;

/// Magic prefix of dataset files.
pub const DATASET_MAGIC: &[u8; 4] = b"R2DS";
/// Magic prefix of model files.
pub const MODEL_MAGIC: &[u8; 4] = b"R2NN";
/// Current version of both binary formats.
pub const FORMAT_VERSION: u32 = 1;

/// Sidecar metadata of a binary IF dump. Field order is the documented
/// contract: frames, chirps, samples, antennas, ADC rate, probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfRecordSidecar {
    pub frames: usize,
    pub chirps: usize,
    pub samples: usize,
    pub antennas: usize,
    pub adc_rate_hz: f64,
    pub probe: ProbeSignal<f64>,
    /// Sample layout of the binary file.
    pub layout: String,
}

/// Writes the IF samples as interleaved little-endian `f32` re/im pairs in
/// `[frame][chirp][sample][antenna]` order, plus a JSON sidecar.
pub fn export_if_record<T: Real>(
    rec: &IfRecord<T>,
    data_path: &Path,
    sidecar_path: &Path,
) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(data_path)?);
    for sample in &rec.samples {
        out.write_all(&(sample.re.as_f64() as f32).to_le_bytes())?;
        out.write_all(&(sample.im.as_f64() as f32).to_le_bytes())?;
    }
    out.flush()?;

    let sidecar = IfRecordSidecar {
        frames: rec.frames,
        chirps: rec.chirps_per_frame,
        samples: rec.samples_per_chirp,
        antennas: rec.antennas,
        adc_rate_hz: rec.config.adc_rate_hz.as_f64(),
        probe: convert_probe(&rec.probe),
        layout: "interleaved f32 le re/im, [frame][chirp][sample][antenna]".to_string(),
    };
    let file = File::create(sidecar_path)?;
    serde_json::to_writer_pretty(BufWriter::new(file), &sidecar)?;
    Ok(())
}

fn convert_probe<T: Real>(probe: &ProbeSignal<T>) -> ProbeSignal<f64> {
    use crate::frontend::ProbeKind;
    let kind = match probe.kind {
        ProbeKind::Sweep {
            start_hz,
            slope_hz_per_s,
        } => ProbeKind::Sweep {
            start_hz: start_hz.as_f64(),
            slope_hz_per_s: slope_hz_per_s.as_f64(),
        },
        ProbeKind::SingleTone { freq_hz } => ProbeKind::SingleTone {
            freq_hz: freq_hz.as_f64(),
        },
    };
    ProbeSignal {
        kind,
        amplitude: probe.amplitude.as_f64(),
    }
}

/// Reads back a binary IF dump (testing aid; no capture driver is bundled).
pub fn read_if_record_samples(
    data_path: &Path,
    sidecar_path: &Path,
) -> io::Result<(Vec<(f32, f32)>, IfRecordSidecar)> {
    let sidecar: IfRecordSidecar =
        serde_json::from_reader(BufReader::new(File::open(sidecar_path)?))?;
    let mut bytes = Vec::new();
    File::open(data_path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "IF dump length is not a whole number of complex f32 pairs",
        ));
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|c| {
            (
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            )
        })
        .collect();
    Ok((samples, sidecar))
}

/// Writes a power series as `index,time_s,power` CSV rows.
pub fn export_power_csv<T: Real>(series: &PowerSeries<T>, path: &Path) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "index,time_s,power")?;
    for (i, v) in series.values.iter().enumerate() {
        writeln!(
            out,
            "{i},{:e},{:e}",
            i as f64 * series.sample_period_s.as_f64(),
            v.as_f64()
        )?;
    }
    out.flush()
}

/// Writes a labeled feature set: header (count, feature length, label map)
/// followed by rows of 1024 little-endian `f32` bins and one label byte.
pub fn write_dataset<T: Real>(features: &[SpectrumFeature<T>], path: &Path) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(DATASET_MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(features.len() as u32).to_le_bytes())?;
    out.write_all(&(SPECTRUM_BINS as u32).to_le_bytes())?;
    // Label map: code byte + name.
    let labels: [(u8, &str); 2] = [(0, "radar"), (1, "wigig")];
    out.write_all(&[labels.len() as u8])?;
    for (code, name) in labels {
        out.write_all(&[code, name.len() as u8])?;
        out.write_all(name.as_bytes())?;
    }
    for feature in features {
        if feature.bins.len() != SPECTRUM_BINS {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("feature has {} bins, expected {SPECTRUM_BINS}", feature.bins.len()),
            ));
        }
        for bin in &feature.bins {
            out.write_all(&(bin.as_f64() as f32).to_le_bytes())?;
        }
        let label = feature.label.ok_or_else(|| {
            io::Error::new(io::ErrorKind::InvalidInput, "unlabeled feature in dataset")
        })?;
        out.write_all(&[label.as_byte()])?;
    }
    out.flush()
}

/// Reads a dataset file written by [`write_dataset`].
pub fn read_dataset(path: &Path) -> io::Result<Vec<SpectrumFeature<f64>>> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(bad_data("not a dataset file"));
    }
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        return Err(bad_data(&format!("unsupported dataset version {version}")));
    }
    let count = read_u32(&mut input)? as usize;
    let feature_len = read_u32(&mut input)? as usize;
    if feature_len != SPECTRUM_BINS {
        return Err(bad_data(&format!("unsupported feature length {feature_len}")));
    }
    let mut label_count = [0u8; 1];
    input.read_exact(&mut label_count)?;
    for _ in 0..label_count[0] {
        let mut head = [0u8; 2];
        input.read_exact(&mut head)?;
        let mut name = vec![0u8; head[1] as usize];
        input.read_exact(&mut name)?;
    }
    let mut features = Vec::with_capacity(count);
    let mut row = vec![0u8; feature_len * 4 + 1];
    for _ in 0..count {
        input.read_exact(&mut row)?;
        let bins: Vec<f64> = row[..feature_len * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let label = SignalLabel::from_byte(row[feature_len * 4])
            .ok_or_else(|| bad_data("unknown label byte"))?;
        features.push(SpectrumFeature {
            bins,
            probe_freq_hz: 0.0,
            label: Some(label),
        });
    }
    Ok(features)
}

/// Writes a trained model: versioned binary of the architecture and all
/// weights, with the training metadata block embedded as JSON.
pub fn write_model<T: Real>(model: &ClassifierModel<T>, path: &Path) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MODEL_MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let meta = serde_json::to_vec(&model.metadata)?;
    out.write_all(&(meta.len() as u32).to_le_bytes())?;
    out.write_all(&meta)?;
    out.write_all(&(model.convs.len() as u32).to_le_bytes())?;
    for conv in &model.convs {
        out.write_all(&(conv.in_ch as u32).to_le_bytes())?;
        out.write_all(&(conv.out_ch as u32).to_le_bytes())?;
        out.write_all(&(conv.kernel as u32).to_le_bytes())?;
    }
    out.write_all(&(model.fc.inputs as u32).to_le_bytes())?;
    out.write_all(&(model.fc.outputs as u32).to_le_bytes())?;
    for p in model.params() {
        out.write_all(&p.as_f64().to_le_bytes())?;
    }
    out.flush()
}

/// Reads a model file written by [`write_model`].
pub fn read_model(path: &Path) -> io::Result<ClassifierModel<f64>> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(bad_data("not a model file"));
    }
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        return Err(bad_data(&format!("unsupported model version {version}")));
    }
    let meta_len = read_u32(&mut input)? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    input.read_exact(&mut meta_bytes)?;
    let metadata: TrainingMetadata = serde_json::from_slice(&meta_bytes)?;

    let conv_count = read_u32(&mut input)? as usize;
    let mut convs = Vec::with_capacity(conv_count);
    for _ in 0..conv_count {
        let in_ch = read_u32(&mut input)? as usize;
        let out_ch = read_u32(&mut input)? as usize;
        let kernel = read_u32(&mut input)? as usize;
        convs.push(Conv1d {
            in_ch,
            out_ch,
            kernel,
            weights: vec![0.0; out_ch * in_ch * kernel],
            bias: vec![0.0; out_ch],
        });
    }
    let fc_in = read_u32(&mut input)? as usize;
    let fc_out = read_u32(&mut input)? as usize;
    let fc = Dense {
        inputs: fc_in,
        outputs: fc_out,
        weights: vec![0.0; fc_in * fc_out],
        bias: vec![0.0; fc_out],
    };
    let mut model = ClassifierModel {
        convs,
        fc,
        metadata,
    };
    let count = model.parameter_count();
    let mut params = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        input.read_exact(&mut buf)?;
        params.push(f64::from_le_bytes(buf));
    }
    model.set_params(&params);
    Ok(model)
}

/// Parses a bearing file: one `anchor_x, anchor_y, angle_deg` row per
/// bearing (comma or whitespace separated, `#` comments), grouped into one
/// observation per distinct anchor position in order of first appearance.
pub fn read_bearing_file(path: &Path) -> io::Result<Vec<AnchorObservation<f64>>> {
    let reader = BufReader::new(File::open(path)?);
    let mut anchors: Vec<AnchorObservation<f64>> = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<f64> = content
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    bad_data(&format!(
                        "line {}: expected a number, got {t:?}",
                        line_no + 1
                    ))
                })
            })
            .collect::<Result<_, _>>()?;
        if fields.len() != 3 {
            return Err(bad_data(&format!(
                "line {}: expected `x, y, angle_deg`, got {} fields",
                line_no + 1,
                fields.len()
            )));
        }
        let (x, y, angle) = (fields[0], fields[1], fields[2]);
        let bearing = BearingObservation {
            angle_deg: angle,
            peak_height: 1.0,
        };
        match anchors.iter_mut().find(|a| a.x == x && a.y == y) {
            Some(anchor) => anchor.bearings.push(bearing),
            None => anchors.push(AnchorObservation::new(x, y, vec![bearing])),
        }
    }
    Ok(anchors)
}

/// Writes bearings in the format [`read_bearing_file`] accepts.
pub fn write_bearing_file(anchors: &[AnchorObservation<f64>], path: &Path) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# anchor_x, anchor_y, angle_deg")?;
    for anchor in anchors {
        for bearing in &anchor.bearings {
            writeln!(out, "{}, {}, {}", anchor.x, anchor.y, bearing.angle_deg)?;
        }
    }
    out.flush()
}

fn read_u32<R: Read>(input: &mut R) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn bad_data(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::cnn::TrainConfig;
    use crate::classify::train_model;
    use crate::frontend::{mix_and_filter, ReceiverConfig, SceneAtDetector};
    use tempfile::tempdir;

    #[test]
    fn if_record_round_trips_through_dump_and_sidecar() {
        let scene = SceneAtDetector::<f64>::new(Vec::new(), 4, 1e-9);
        let cfg = ReceiverConfig::default().with_frames(1).with_chirps(2);
        let rec = mix_and_filter(&scene, &ProbeSignal::single_tone(78e9), &cfg, 5).unwrap();
        let dir = tempdir().unwrap();
        let data = dir.path().join("dump.iq");
        let sidecar = dir.path().join("dump.json");
        export_if_record(&rec, &data, &sidecar).unwrap();
        let (samples, meta) = read_if_record_samples(&data, &sidecar).unwrap();
        assert_eq!(samples.len(), rec.samples.len());
        assert_eq!(meta.frames, 1);
        assert_eq!(meta.chirps, 2);
        assert_eq!(meta.samples, 1024);
        assert_eq!(meta.antennas, 4);
        assert_eq!(meta.adc_rate_hz, 12e6);
        for (orig, read) in rec.samples.iter().zip(&samples) {
            assert_eq!(orig.re as f32, read.0);
            assert_eq!(orig.im as f32, read.1);
        }
    }

    #[test]
    fn dataset_round_trip_preserves_bins_and_labels() {
        let features: Vec<SpectrumFeature<f64>> = (0..5)
            .map(|i| SpectrumFeature {
                bins: (0..SPECTRUM_BINS).map(|b| ((b + i) % 7) as f64 / 7.0).collect(),
                probe_freq_hz: 78e9,
                label: Some(if i % 2 == 0 {
                    SignalLabel::Radar
                } else {
                    SignalLabel::WiGig
                }),
            })
            .collect();
        let dir = tempdir().unwrap();
        let path = dir.path().join("set.r2ds");
        write_dataset(&features, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.len(), 5);
        for (orig, read) in features.iter().zip(&back) {
            assert_eq!(orig.label, read.label);
            for (a, b) in orig.bins.iter().zip(&read.bins) {
                assert_eq!(*a as f32, *b as f32);
            }
        }
    }

    #[test]
    fn model_round_trip_preserves_weights_and_metadata() {
        let mut model = ClassifierModel::<f64>::new(77);
        // Mark as trained through a minimal run so classify() works on load.
        let a = vec![1.0; SPECTRUM_BINS];
        let b = vec![0.0; SPECTRUM_BINS];
        let samples: Vec<(&[f64], SignalLabel)> = vec![
            (a.as_slice(), SignalLabel::Radar),
            (b.as_slice(), SignalLabel::WiGig),
        ];
        train_model(
            &mut model,
            &samples,
            &samples,
            &TrainConfig {
                epochs: 1,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.r2nn");
        write_model(&model, &path).unwrap();
        let back = read_model(&path).unwrap();
        assert_eq!(back.metadata, model.metadata);
        assert_eq!(back.params(), model.params());
    }

    #[test]
    fn bearing_file_parses_and_groups() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bearings.txt");
        std::fs::write(
            &path,
            "# comment\n0.0, 0.0, 45.0\n2.0 0.0 -45.0\n0.0,0.0,30.0\n\n",
        )
        .unwrap();
        let anchors = read_bearing_file(&path).unwrap();
        assert_eq!(anchors.len(), 2);
        assert_eq!(anchors[0].bearings.len(), 2);
        assert_eq!(anchors[1].bearings.len(), 1);
        assert_eq!(anchors[0].bearings[1].angle_deg, 30.0);

        // Round trip.
        let out = dir.path().join("bearings2.txt");
        write_bearing_file(&anchors, &out).unwrap();
        let again = read_bearing_file(&out).unwrap();
        assert_eq!(anchors, again);

        // Malformed rows carry line context.
        std::fs::write(&path, "0.0, oops, 45.0\n").unwrap();
        let err = read_bearing_file(&path).unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
