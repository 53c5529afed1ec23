//! Synthetic paired video/audio latents.
//!
//! Class `k` draws `video ~ N(mean_k, video_std^2 I)` and sets
//! `audio = C video + offset_k + noise_scale * z` with `z ~ N(0, I)`.

use std::io::{Read, Write};

use crate::error::{FlowError, Result};
use crate::rng::Rng64;
use crate::tensor::{Condition, Modality, TensorState};

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledAvParams {
    /// Per-class video means; all of the video dimension.
    pub class_means: Vec<Vec<f64>>,
    pub video_std: f64,
    /// Row-major `audio_dim x video_dim` coupling matrix, one row per audio coordinate.
    pub coupling: Vec<Vec<f64>>,
    /// Per-class audio offsets.
    pub class_offsets: Vec<Vec<f64>>,
    pub noise_scale: f64,
}

impl CoupledAvParams {
    /// Two classes at `(+-separation/2, 0, ...)` in video space, identity-like
    /// coupling and opposite audio offsets.
    pub fn two_class(video_dim: usize, audio_dim: usize, separation: f64, video_std: f64, noise_scale: f64) -> Self {
        let mean = |sign: f64| {
            let mut m = vec![0.0; video_dim];
            m[0] = sign * separation / 2.0;
            m
        };
        let coupling = (0..audio_dim)
            .map(|r| (0..video_dim).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
            .collect();
        let offset = |sign: f64| {
            let mut o = vec![0.0; audio_dim];
            if audio_dim > 1 {
                o[1] = sign * 0.5;
            }
            o
        };
        Self {
            class_means: vec![mean(-1.0), mean(1.0)],
            video_std,
            coupling,
            class_offsets: vec![offset(-1.0), offset(1.0)],
            noise_scale,
        }
    }

    pub fn classes(&self) -> usize {
        self.class_means.len()
    }

    pub fn video_dim(&self) -> usize {
        self.class_means.first().map_or(0, Vec::len)
    }

    pub fn audio_dim(&self) -> usize {
        self.coupling.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FlowError::InvalidConfig(m));
        let (k, vd, ad) = (self.classes(), self.video_dim(), self.audio_dim());
        if k == 0 || vd == 0 || ad == 0 {
            return bad(format!("need classes, video and audio dims > 0, got {k}, {vd}, {ad}"));
        }
        if self.class_means.iter().any(|m| m.len() != vd) {
            return bad("class means differ in dimension".into());
        }
        if self.coupling.iter().any(|r| r.len() != vd) {
            return bad(format!("coupling rows must have {vd} columns"));
        }
        if self.class_offsets.len() != k || self.class_offsets.iter().any(|o| o.len() != ad) {
            return bad(format!("need {k} class offsets of dimension {ad}"));
        }
        if !(self.video_std >= 0.0) || !(self.noise_scale >= 0.0) {
            return bad("standard deviations must be >= 0".into());
        }
        let all = self
            .class_means
            .iter()
            .chain(&self.coupling)
            .chain(&self.class_offsets)
            .flatten()
            .chain([&self.video_std, &self.noise_scale]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return bad("non-finite dataset parameter".into());
        }
        Ok(())
    }

    /// `C video + offset_class`.
    pub fn coupled_audio(&self, video: &[f64], class: usize) -> Vec<f64> {
        self.coupling
            .iter()
            .zip(&self.class_offsets[class])
            .map(|(row, o)| o + row.iter().zip(video).map(|(c, v)| c * v).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvSample {
    pub video: TensorState,
    pub audio: TensorState,
    pub prompt: Condition,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledAvDataset {
    /// Generator parameters; `None` for datasets read back from CSV.
    pub params: Option<CoupledAvParams>,
    pub classes: usize,
    pub samples: Vec<AvSample>,
}

/// Draws `n` samples with classes assigned round-robin (`i % classes`).
pub fn synth_av_dataset(params: &CoupledAvParams, n: usize, seed: u64) -> Result<CoupledAvDataset> {
    params.validate()?;
    if n == 0 {
        return Err(FlowError::InvalidConfig("dataset size must be >= 1".into()));
    }
    let k = params.classes();
    let mut rng = Rng64::new(seed);
    let samples = (0..n)
        .map(|i| {
            let class = i % k;
            let video: Vec<f64> = params.class_means[class]
                .iter()
                .map(|m| m + params.video_std * rng.normal())
                .collect();
            let audio: Vec<f64> = params
                .coupled_audio(&video, class)
                .into_iter()
                .map(|a| a + params.noise_scale * rng.normal())
                .collect();
            Ok(AvSample {
                video: TensorState::new(video, vec![params.video_dim()], Modality::Video)?,
                audio: TensorState::new(audio, vec![params.audio_dim()], Modality::Audio)?,
                prompt: Condition::one_hot(class, k)?,
                class,
            })
        })
        .collect::<Result<_>>()?;
    Ok(CoupledAvDataset {
        params: Some(params.clone()),
        classes: k,
        samples,
    })
}

impl CoupledAvDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn video_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.video.len())
    }

    pub fn audio_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.audio.len())
    }

    /// Training pairs over the joint state `concat(video, audio)` with the class prompt.
    pub fn flow_pairs(&self) -> Vec<(TensorState, Condition)> {
        self.samples
            .iter()
            .map(|s| (s.video.concat(&s.audio), s.prompt.clone()))
            .collect()
    }

    /// One row per sample: `video_0.., audio_0.., class`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.video_dim()).map(|i| format!("video_{i}")).collect();
        header.extend((0..self.audio_dim()).map(|i| format!("audio_{i}")));
        header.push("class".into());
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row: Vec<String> = s.video.data().iter().chain(s.audio.data()).map(|v| format!("{v:?}")).collect();
            row.push(s.class.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV layout written by [`CoupledAvDataset::write_csv`]. The
    /// class count is `max(class) + 1` unless `classes` is given.
    pub fn read_csv<R: Read>(reader: R, classes: Option<usize>) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let mut video_cols = Vec::new();
        let mut audio_cols = Vec::new();
        let mut class_col = None;
        for (i, name) in header.iter().enumerate() {
            if name.starts_with("video_") {
                video_cols.push(i);
            } else if name.starts_with("audio_") {
                audio_cols.push(i);
            } else if name == "class" {
                class_col = Some(i);
            } else {
                return Err(FlowError::InvalidInput(format!("unknown dataset column {name:?}")));
            }
        }
        let class_col = class_col.ok_or_else(|| FlowError::InvalidInput("missing class column".into()))?;
        if video_cols.is_empty() || audio_cols.is_empty() {
            return Err(FlowError::InvalidInput("need video_* and audio_* columns".into()));
        }
        let mut rows = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let field = |i: usize| -> Result<f64> {
                record[i].trim().parse().map_err(|_| {
                    FlowError::InvalidInput(format!("row {}: bad number {:?}", line + 1, &record[i]))
                })
            };
            let video = video_cols.iter().map(|&i| field(i)).collect::<Result<Vec<_>>>()?;
            let audio = audio_cols.iter().map(|&i| field(i)).collect::<Result<Vec<_>>>()?;
            let class: usize = record[class_col].trim().parse().map_err(|_| {
                FlowError::InvalidInput(format!("row {}: bad class {:?}", line + 1, &record[class_col]))
            })?;
            rows.push((video, audio, class));
        }
        if rows.is_empty() {
            return Err(FlowError::InvalidInput("dataset CSV has no rows".into()));
        }
        let k = classes.unwrap_or_else(|| rows.iter().map(|r| r.2).max().unwrap_or(0) + 1);
        let (vd, ad) = (video_cols.len(), audio_cols.len());
        let samples = rows
            .into_iter()
            .map(|(video, audio, class)| {
                Ok(AvSample {
                    video: TensorState::new(video, vec![vd], Modality::Video)?,
                    audio: TensorState::new(audio, vec![ad], Modality::Audio)?,
                    prompt: Condition::one_hot(class, k)?,
                    class,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            params: None,
            classes: k,
            samples,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(noise: f64) -> CoupledAvParams {
        CoupledAvParams {
            class_means: vec![vec![-1.0, 0.5], vec![1.5, -0.5], vec![0.0, 3.0]],
            video_std: 0.1,
            coupling: vec![vec![0.5, -1.0], vec![2.0, 0.25], vec![0.0, 1.0]],
            class_offsets: vec![vec![0.0, 1.0, 2.0], vec![-1.0, 0.0, 0.5], vec![3.0, 3.0, 3.0]],
            noise_scale: noise,
        }
    }

    #[test]
    fn zero_noise_gives_exact_coupling() {
        let p = params(0.0);
        let d = synth_av_dataset(&p, 30, 4).unwrap();
        for s in &d.samples {
            assert_eq!(s.audio.data(), p.coupled_audio(s.video.data(), s.class).as_slice());
            assert_eq!(s.video.modality(), Modality::Video);
            assert_eq!(s.audio.modality(), Modality::Audio);
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let p = params(0.3);
        assert_eq!(synth_av_dataset(&p, 50, 9).unwrap(), synth_av_dataset(&p, 50, 9).unwrap());
        assert_ne!(synth_av_dataset(&p, 50, 9).unwrap(), synth_av_dataset(&p, 50, 10).unwrap());
    }

    #[test]
    fn per_class_means_match_spec() {
        // means are >= 10 sigma apart (sigma 0.1); 5 sigma CLT bound on the
        // class mean with 3000 draws is 5 * 0.1 / sqrt(3000) ~ 0.009 < 0.05
        let p = params(0.2);
        let d = synth_av_dataset(&p, 9000, 1).unwrap();
        for k in 0..3 {
            let members: Vec<_> = d.samples.iter().filter(|s| s.class == k).collect();
            assert_eq!(members.len(), 3000);
            for j in 0..2 {
                let m = members.iter().map(|s| s.video.data()[j]).sum::<f64>() / members.len() as f64;
                assert!((m - p.class_means[k][j]).abs() < 0.05, "class {k} coord {j}: {m}");
            }
        }
    }

    #[test]
    fn inconsistent_dims_are_config_errors() {
        let mut p = params(0.1);
        p.coupling[1].push(1.0);
        assert!(matches!(synth_av_dataset(&p, 5, 0), Err(FlowError::InvalidConfig(_))));
        let mut p = params(0.1);
        p.class_offsets.pop();
        assert!(synth_av_dataset(&p, 5, 0).is_err());
        assert!(synth_av_dataset(&params(0.1), 0, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let d = synth_av_dataset(&params(0.3), 12, 2).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("video_0,video_1,audio_0,audio_1,audio_2,class\n"));
        let back = CoupledAvDataset::read_csv(buf.as_slice(), None).unwrap();
        assert_eq!(back.samples, d.samples);
        assert_eq!(back.classes, 3);
        assert!(back.params.is_none());
    }

    #[test]
    fn flow_pairs_concatenate_video_then_audio() {
        let d = synth_av_dataset(&params(0.3), 3, 2).unwrap();
        let pairs = d.flow_pairs();
        let s = &d.samples[1];
        assert_eq!(&pairs[1].0.data()[..2], s.video.data());
        assert_eq!(&pairs[1].0.data()[2..], s.audio.data());
        assert_eq!(pairs[1].1, s.prompt);
    }
}
