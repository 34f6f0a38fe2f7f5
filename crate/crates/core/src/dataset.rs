//! Demonstration episodes and datasets of (observation, mask, state, action).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::image::{Image, Mask};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub observation: Image,
    pub mask: Option<Mask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: String,
    pub frames: Vec<Frame>,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Checks `|frames| = |states| = |actions|`, shared observation dims,
    /// mask dims and fixed state/action widths.
    pub fn validate(&self) -> Result<()> {
        if self.states.len() != self.frames.len() || self.actions.len() != self.frames.len() {
            return Err(Error::shape(
                format!("{} states and actions", self.frames.len()),
                format!("{} states, {} actions", self.states.len(), self.actions.len()),
            ));
        }
        if let Some(first) = self.frames.first() {
            let dims = first.observation.dims();
            for (i, f) in self.frames.iter().enumerate() {
                if f.observation.dims() != dims {
                    return Err(Error::shape(
                        format!("{dims:?}"),
                        format!("frame {i}: {:?}", f.observation.dims()),
                    ));
                }
                if let Some(m) = &f.mask {
                    if (m.height(), m.width()) != (dims.0, dims.1) {
                        return Err(Error::shape(
                            format!("{}x{} mask", dims.0, dims.1),
                            format!("frame {i}: {}x{}", m.height(), m.width()),
                        ));
                    }
                }
            }
        }
        let widths = |rows: &[Vec<f64>]| rows.windows(2).all(|w| w[0].len() == w[1].len());
        if !widths(&self.states) || !widths(&self.actions) {
            return Err(Error::InvalidArgument(format!(
                "episode {}: ragged state or action rows",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DatasetMeta {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub state_dim: usize,
    pub action_dim: usize,
}

impl DatasetMeta {
    fn of(ep: &Episode) -> Option<DatasetMeta> {
        let f = ep.frames.first()?;
        let (height, width, channels) = f.observation.dims();
        Some(DatasetMeta {
            height,
            width,
            channels,
            state_dim: ep.states[0].len(),
            action_dim: ep.actions[0].len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub episodes: Vec<Episode>,
    pub meta: DatasetMeta,
}

impl Dataset {
    /// Validates each episode and that dims agree across episodes. The meta
    /// is taken from the first non-empty episode, or `fallback` if none.
    pub fn new(episodes: Vec<Episode>, fallback: DatasetMeta) -> Result<Self> {
        let mut meta = None;
        for ep in &episodes {
            ep.validate()?;
            if let Some(m) = DatasetMeta::of(ep) {
                match meta {
                    None => meta = Some(m),
                    Some(prev) if prev != m => {
                        return Err(Error::shape(
                            format!("{prev:?}"),
                            format!("episode {}: {m:?}", ep.id),
                        ))
                    }
                    _ => {}
                }
            }
        }
        Ok(Self { episodes, meta: meta.unwrap_or(fallback) })
    }

    pub fn frame_count(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }

    pub fn observations(&self) -> impl Iterator<Item = &Image> {
        self.episodes.iter().flat_map(|e| e.frames.iter().map(|f| &f.observation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn episode(id: &str, n: usize, dims: (usize, usize)) -> Episode {
        Episode {
            id: id.into(),
            frames: (0..n)
                .map(|_| Frame { observation: Image::zeros(dims.0, dims.1, 3), mask: None })
                .collect(),
            states: vec![vec![0.0, 0.0]; n],
            actions: vec![vec![1.0, 0.0]; n],
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let mut ep = episode("a", 3, (4, 4));
        ep.actions.pop();
        assert!(ep.validate().is_err());
    }

    #[test]
    fn inconsistent_dims_rejected() {
        let eps = vec![episode("a", 2, (4, 4)), episode("b", 2, (4, 5))];
        assert!(Dataset::new(eps, DatasetMeta::default()).is_err());
        let ok = Dataset::new(vec![episode("a", 2, (4, 4))], DatasetMeta::default()).unwrap();
        assert_eq!(ok.meta.state_dim, 2);
        assert_eq!(ok.frame_count(), 2);
    }
}
