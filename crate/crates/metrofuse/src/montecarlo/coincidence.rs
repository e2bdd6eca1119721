//! Time-tag analysis: multi-channel coincidence counting, accidental estimation,
//! and cross-correlation histograms.

use serde::Serialize;

/// One detection event, as exported: `detector_id,time_ps`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TimeTag {
    pub detector_id: String,
    pub time_ps: i64,
}

/// All tags of one detector, sorted by time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagStream {
    pub detector_id: String,
    pub times_ps: Vec<i64>,
}

impl TagStream {
    pub fn new(detector_id: impl Into<String>, mut times_ps: Vec<i64>) -> Self {
        times_ps.sort_unstable();
        TagStream { detector_id: detector_id.into(), times_ps }
    }

    pub fn len(&self) -> usize {
        self.times_ps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_ps.is_empty()
    }

    /// Copy with every tag moved by `offset_ps`.
    pub fn shifted(&self, offset_ps: i64) -> TagStream {
        TagStream {
            detector_id: self.detector_id.clone(),
            times_ps: self.times_ps.iter().map(|t| t + offset_ps).collect(),
        }
    }
}

/// Counts events where every channel fires within `window_ps` of the earliest
/// participating tag. Greedy and symmetric: tags are consumed in global time order,
/// each anchoring at most one coincidence, and every consumed set is removed, so no
/// tag is counted twice. For independent Poisson channels at rates r1 and r2 the
/// expected count is `2 * r1 * r2 * window * duration` (either channel may anchor).
pub fn find_coincidences(streams: &[&TagStream], window_ps: i64) -> u64 {
    assert!(streams.len() >= 2, "coincidences need at least two channels");
    assert!(window_ps >= 0, "window must be nonnegative");
    let n = streams.len();
    let mut head = vec![0usize; n];
    let mut count = 0;
    loop {
        // anchor at the globally earliest unconsumed tag; ties keep channel order
        let mut anchor: Option<(usize, i64)> = None;
        for (ch, stream) in streams.iter().enumerate() {
            if let Some(&t) = stream.times_ps.get(head[ch]) {
                if anchor.is_none_or(|(_, best)| t < best) {
                    anchor = Some((ch, t));
                }
            }
        }
        let Some((anchor_ch, t0)) = anchor else { break };

        // every other head is >= t0 by construction, so only the upper edge matters
        let complete = (0..n).all(|ch| {
            ch == anchor_ch
                || streams[ch]
                    .times_ps
                    .get(head[ch])
                    .is_some_and(|&t| t <= t0 + window_ps)
        });
        if complete {
            for h in head.iter_mut() {
                *h += 1;
            }
            count += 1;
        } else {
            head[anchor_ch] += 1;
        }
    }
    count
}

/// Accidental-coincidence estimate: recounts with the last channel shifted by
/// `offset_ps`, which destroys genuine correlations while preserving rates. The
/// offset must be much larger than the window.
pub fn accidental_estimate(streams: &[&TagStream], window_ps: i64, offset_ps: i64) -> u64 {
    assert!(streams.len() >= 2, "coincidences need at least two channels");
    let shifted = streams[streams.len() - 1].shifted(offset_ps);
    let mut arranged: Vec<&TagStream> = streams[..streams.len() - 1].to_vec();
    arranged.push(&shifted);
    find_coincidences(&arranged, window_ps)
}

/// Uniform-bin histogram over a symmetric delay range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Histogram {
    /// Left edge of the first bin.
    pub origin_ps: i64,
    pub bin_ps: i64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn bin_center_ps(&self, index: usize) -> f64 {
        self.origin_ps as f64 + (index as f64 + 0.5) * self.bin_ps as f64
    }

    fn argmax(&self) -> Option<usize> {
        // ties resolve toward the center nearest zero delay
        let best = *self.counts.iter().max()?;
        (0..self.counts.len())
            .filter(|&i| self.counts[i] == best)
            .min_by(|&a, &b| {
                self.bin_center_ps(a)
                    .abs()
                    .total_cmp(&self.bin_center_ps(b).abs())
            })
    }

    /// Center of the fullest bin: the relative-delay estimate.
    pub fn argmax_center_ps(&self) -> Option<f64> {
        self.argmax().map(|i| self.bin_center_ps(i))
    }

    /// Full width at half maximum of the peak, after subtracting the median count
    /// as a flat baseline. Crossings are linearly interpolated between bin centers.
    /// `None` when the histogram is empty or featureless.
    pub fn fwhm_ps(&self) -> Option<f64> {
        let peak_idx = self.argmax()?;
        let peak = self.counts[peak_idx] as f64;
        let mut sorted = self.counts.clone();
        sorted.sort_unstable();
        let baseline = sorted[sorted.len() / 2] as f64;
        if peak <= baseline {
            return None;
        }
        let half = baseline + (peak - baseline) / 2.0;

        let crossing = |from: usize, step: isize| -> f64 {
            let mut prev = from;
            loop {
                let next = prev as isize + step;
                if next < 0 || next as usize >= self.counts.len() {
                    // peak runs off the histogram edge; clamp at the last center
                    return self.bin_center_ps(prev);
                }
                let next = next as usize;
                let c_prev = self.counts[prev] as f64;
                let c_next = self.counts[next] as f64;
                if c_next <= half {
                    let frac = if c_prev == c_next { 0.0 } else { (c_prev - half) / (c_prev - c_next) };
                    return self.bin_center_ps(prev)
                        + frac * (self.bin_center_ps(next) - self.bin_center_ps(prev));
                }
                prev = next;
            }
        };
        let left = crossing(peak_idx, -1);
        let right = crossing(peak_idx, 1);
        Some(right - left)
    }

    /// `(bin_center_ps, count)` rows in order, the export format.
    pub fn rows(&self) -> impl Iterator<Item = (f64, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (self.bin_center_ps(i), c))
    }
}

/// Peak position of a correlation histogram: the center of the fullest bin, ties
/// broken toward smaller |tau|. `None` for an empty histogram.
pub fn relative_delay_estimate(hist: &Histogram) -> Option<f64> {
    hist.argmax_center_ps()
}

/// Cross-correlation histogram of `later - earlier` tag-time differences over
/// `[-range_ps, +range_ps)`. `range_ps` must be a positive multiple of `bin_ps`.
pub fn g2_histogram(earlier: &TagStream, later: &TagStream, range_ps: i64, bin_ps: i64) -> Histogram {
    assert!(bin_ps > 0 && range_ps > 0, "histogram extents must be positive");
    assert!(range_ps % bin_ps == 0, "range must be a whole number of bins");
    let n_bins = (2 * range_ps / bin_ps) as usize;
    let mut counts = vec![0u64; n_bins];
    let mut start = 0usize;
    for &ta in &earlier.times_ps {
        let lo = ta - range_ps;
        let hi = ta + range_ps;
        while start < later.times_ps.len() && later.times_ps[start] < lo {
            start += 1;
        }
        for &tb in &later.times_ps[start..] {
            if tb >= hi {
                break;
            }
            let idx = ((tb - ta + range_ps) / bin_ps) as usize;
            counts[idx] += 1;
        }
    }
    Histogram { origin_ps: -range_ps, bin_ps, counts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, Normal};

    fn stream(id: &str, times: Vec<i64>) -> TagStream {
        TagStream::new(id, times)
    }

    fn poisson_stream(id: &str, rate_hz: f64, duration_s: f64, seed: u64) -> TagStream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let exp = Exp::new(rate_hz * 1e-12).unwrap();
        let mut times = Vec::new();
        let mut t = 0.0f64;
        let horizon = duration_s * 1e12;
        loop {
            t += exp.sample(&mut rng);
            if t >= horizon {
                break;
            }
            times.push(t.round() as i64);
        }
        stream(id, times)
    }

    #[test]
    fn pairs_inside_the_window_count_once() {
        let a = stream("a", vec![0, 10_000, 20_000]);
        let b = stream("b", vec![100, 10_050, 25_000]);
        assert_eq!(find_coincidences(&[&a, &b], 500), 2);
    }

    #[test]
    fn a_tag_is_never_reused() {
        // one `a` tag near two `b` tags: only one coincidence may form
        let a = stream("a", vec![1_000]);
        let b = stream("b", vec![900, 1_100]);
        assert_eq!(find_coincidences(&[&a, &b], 500), 1);
    }

    #[test]
    fn counting_is_symmetric_in_channel_order() {
        let a = stream("a", vec![0, 5_000, 9_000, 14_000]);
        let b = stream("b", vec![200, 5_400, 13_900]);
        let ab = find_coincidences(&[&a, &b], 300);
        let ba = find_coincidences(&[&b, &a], 300);
        assert_eq!(ab, ba);
    }

    #[test]
    fn fourfold_requires_every_channel() {
        let a = stream("a", vec![1_000, 50_000]);
        let b = stream("b", vec![1_001, 50_001]);
        let c = stream("c", vec![1_002]);
        let d = stream("d", vec![1_003, 50_003]);
        assert_eq!(find_coincidences(&[&a, &b, &c, &d], 100), 1);
    }

    #[test]
    fn accidental_rate_doubles_the_one_sided_product() {
        let rate = 1.0e5;
        let duration = 10.0;
        let window = 10_000i64;
        let a = poisson_stream("a", rate, duration, 1);
        let b = poisson_stream("b", rate, duration, 2);
        let count = find_coincidences(&[&a, &b], window) as f64;
        let expected = 2.0 * rate * rate * (window as f64 * 1e-12) * duration;
        assert!(
            (count - expected).abs() < 5.0 * expected.sqrt(),
            "count {count}, expected {expected}"
        );
    }

    #[test]
    fn shifting_destroys_true_correlations() {
        let a = poisson_stream("a", 2.0e4, 5.0, 3);
        let b = TagStream::new("b", a.times_ps.iter().map(|t| t + 7).collect());
        let window = 100i64;
        let raw = find_coincidences(&[&a, &b], window);
        let accidental = accidental_estimate(&[&a, &b], window, 1_000_000);
        assert_eq!(raw, a.len() as u64);
        assert!((accidental as f64) < 0.05 * raw as f64);
    }

    #[test]
    fn histogram_peak_sits_at_the_true_delay() {
        let delay = 5_000i64;
        let a = poisson_stream("a", 5.0e4, 2.0, 4);
        let b = TagStream::new("b", a.times_ps.iter().map(|t| t + delay).collect());
        let hist = g2_histogram(&a, &b, 100_000, 100);
        let peak = hist.argmax_center_ps().unwrap();
        assert!((peak - delay as f64).abs() <= 50.0);
    }

    #[test]
    fn histogram_fwhm_tracks_jitter_quadrature() {
        // both channels jittered at 530 ps FWHM: difference FWHM is 530 * sqrt(2)
        let fwhm = 530.0;
        let sigma = fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut a_times = Vec::new();
        let mut b_times = Vec::new();
        for k in 0..200_000i64 {
            let base = k * 1_000_000;
            a_times.push(base + normal.sample(&mut rng).round() as i64);
            b_times.push(base + normal.sample(&mut rng).round() as i64);
        }
        let a = TagStream::new("a", a_times);
        let b = TagStream::new("b", b_times);
        let hist = g2_histogram(&a, &b, 10_000, 100);
        let measured = hist.fwhm_ps().unwrap();
        let expected = fwhm * std::f64::consts::SQRT_2;
        assert!(
            (measured - expected).abs() < 40.0,
            "measured {measured}, expected {expected}"
        );
    }

    #[test]
    fn histogram_bins_cover_the_symmetric_range() {
        let a = stream("a", vec![0]);
        let b = stream("b", vec![-999, 999, 1_000]);
        let hist = g2_histogram(&a, &b, 1_000, 100);
        assert_eq!(hist.counts.len(), 20);
        assert_eq!(hist.counts.iter().sum::<u64>(), 2);
        assert_eq!(hist.origin_ps, -1_000);
    }

    #[test]
    fn featureless_histogram_has_no_width() {
        let a = stream("a", vec![]);
        let b = stream("b", vec![]);
        let hist = g2_histogram(&a, &b, 1_000, 100);
        assert!(hist.fwhm_ps().is_none());
    }
}
