use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::isp::{
    burst_median, classic_pipeline, histogram_stretch, match_channel_means, IspParams, STRETCH_HI_PCT, STRETCH_LO_PCT,
};
use crate::train::dataset::{Dataset, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    /// Classic pipeline with the sensor's white balance.
    Classic,
    /// Classic pipeline followed by a luminance histogram stretch.
    ClassicStretch,
    /// Per-pixel median of the classic pipeline over a burst of frames.
    Burst,
}

impl BaselineMethod {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Classic => "classic",
            BaselineMethod::ClassicStretch => "classic+stretch",
            BaselineMethod::Burst => "burst",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "classic" => Some(BaselineMethod::Classic),
            "classic+stretch" => Some(BaselineMethod::ClassicStretch),
            "burst" => Some(BaselineMethod::Burst),
            _ => None,
        }
    }
}

fn classic(sample: &Sample, raw: &crate::raw::RawMosaic) -> Result<RgbImage> {
    classic_pipeline(raw, sample.ratio, &IspParams::new(raw.meta.wb_gains))
}

/// Baseline output per scene. Every method ends with channel-mean matching to
/// the reference, so baselines are not penalized for global color or
/// brightness. `frames` is the burst length used by [`BaselineMethod::Burst`].
pub fn baseline_outputs(dataset: &Dataset, method: BaselineMethod, frames: usize) -> Result<Vec<(String, RgbImage)>> {
    dataset
        .samples
        .iter()
        .map(|s| {
            let img = match method {
                BaselineMethod::Classic => classic(s, &s.input)?,
                BaselineMethod::ClassicStretch => histogram_stretch(&classic(s, &s.input)?, STRETCH_LO_PCT, STRETCH_HI_PCT)?,
                BaselineMethod::Burst => {
                    let available = 1 + s.extra_frames.len();
                    if frames == 0 || frames > available {
                        return Err(Error::Dataset(format!(
                            "scene {} has {available} frames, burst needs {frames}",
                            s.id
                        )));
                    }
                    let outs = s.frames().take(frames).map(|f| classic(s, f)).collect::<Result<Vec<_>>>()?;
                    burst_median(&outs)?
                }
            };
            Ok((s.id.clone(), match_channel_means(&img, &s.reference)?))
        })
        .collect()
}
