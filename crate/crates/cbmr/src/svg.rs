//! A minimal SVG rendering of the calibration PP data: observed −log₁₀ p
//! order statistics with their ±1.96·sd envelope against the uniform
//! reference, plus the identity line a calibrated test should follow.
//! Everything is emitted with fixed-precision coordinates so the same result
//! always renders to the same bytes.

use cbmr_core::nullsim::CalibrationResult;

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 56.0;
/// Plotted ranks are thinned to at most this many points.
const MAX_POINTS: usize = 1500;

struct Frame {
    max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        MARGIN + (W - 2.0 * MARGIN) * (v / self.max)
    }

    fn y(&self, v: f64) -> f64 {
        H - MARGIN - (H - 2.0 * MARGIN) * (v.max(0.0) / self.max)
    }
}

fn polyline(out: &mut String, frame: &Frame, pts: &[(f64, f64)], style: &str) {
    out.push_str(&format!("<polyline fill=\"none\" {style} points=\""));
    for (x, y) in pts {
        out.push_str(&format!("{:.2},{:.2} ", frame.x(*x), frame.y(*y)));
    }
    out.push_str("\"/>\n");
}

/// Indices to plot: every stride-th rank plus the first and last.
fn thinned(n: usize) -> Vec<usize> {
    let stride = n.div_ceil(MAX_POINTS).max(1);
    let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
    if *idx.last().unwrap() != n - 1 {
        idx.push(n - 1);
    }
    idx
}

pub fn pp_plot_svg(cal: &CalibrationResult) -> String {
    let n = cal.pp_expected.len();
    let idx = thinned(n);
    let max = cal
        .pp_expected
        .iter()
        .chain(cal.pp_hi.iter())
        .fold(1.0f64, |m, &v| if v.is_finite() { m.max(v) } else { m })
        .ceil();
    let frame = Frame { max };

    let series = |vals: &[f64]| -> Vec<(f64, f64)> {
        idx.iter().map(|&k| (cal.pp_expected[k], vals[k])).collect()
    };

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // envelope as a closed band: hi forward, lo backward
    out.push_str("<polygon fill=\"#c6dbef\" stroke=\"none\" points=\"");
    for &k in &idx {
        out.push_str(&format!(
            "{:.2},{:.2} ",
            frame.x(cal.pp_expected[k]),
            frame.y(cal.pp_hi[k])
        ));
    }
    for &k in idx.iter().rev() {
        out.push_str(&format!(
            "{:.2},{:.2} ",
            frame.x(cal.pp_expected[k]),
            frame.y(cal.pp_lo[k])
        ));
    }
    out.push_str("\"/>\n");

    polyline(
        &mut out,
        &frame,
        &[(0.0, 0.0), (max, max)],
        "stroke=\"#999999\" stroke-dasharray=\"6,4\" stroke-width=\"1\"",
    );
    polyline(
        &mut out,
        &frame,
        &series(&cal.pp_mean),
        "stroke=\"#08519c\" stroke-width=\"1.5\"",
    );

    // axes with integer ticks
    out.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b:.2}\" x2=\"{r:.2}\" y2=\"{b:.2}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b:.2}\" stroke=\"black\"/>\n",
        m = MARGIN,
        t = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
    ));
    let mut tick = 0.0;
    while tick <= max {
        out.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{b:.2}\" x2=\"{x:.2}\" y2=\"{b2:.2}\" stroke=\"black\"/>\n\
             <text x=\"{x:.2}\" y=\"{ty:.2}\" font-size=\"11\" text-anchor=\"middle\">{tick}</text>\n",
            x = frame.x(tick),
            b = H - MARGIN,
            b2 = H - MARGIN + 5.0,
            ty = H - MARGIN + 18.0,
        ));
        out.push_str(&format!(
            "<line x1=\"{m2:.2}\" y1=\"{y:.2}\" x2=\"{m}\" y2=\"{y:.2}\" stroke=\"black\"/>\n\
             <text x=\"{tx:.2}\" y=\"{y2:.2}\" font-size=\"11\" text-anchor=\"end\">{tick}</text>\n",
            m = MARGIN,
            m2 = MARGIN - 5.0,
            y = frame.y(tick),
            y2 = frame.y(tick) + 4.0,
            tx = MARGIN - 8.0,
        ));
        tick += 1.0;
    }
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">expected \
         -log10 p</text>\n",
        W / 2.0,
        H - 12.0
    ));
    out.push_str(&format!(
        "<text x=\"14\" y=\"{y:.2}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 14 {y:.2})\">observed -log10 p</text>\n",
        y = H / 2.0,
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"20\" font-size=\"12\" text-anchor=\"middle\">null calibration: \
         {} realizations, mean and 95% envelope</text>\n",
        W / 2.0,
        cal.n_used
    ));
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_cal(n: usize) -> CalibrationResult {
        let expected = cbmr_core::nullsim::pp_expected(n);
        CalibrationResult {
            pp_mean: expected.iter().map(|e| e * 0.98).collect(),
            pp_lo: expected.iter().map(|e| e * 0.9).collect(),
            pp_hi: expected.iter().map(|e| e * 1.1).collect(),
            pp_expected: expected,
            fpr_at_05: 0.05,
            frac_invalid_fdr_raw: 0.1,
            frac_invalid_fdr_truncated: 0.0,
            n_used: 100,
            n_excluded_singular: 0,
            n_excluded_unconverged: 0,
            alpha_template: None,
        }
    }

    #[test]
    fn renders_a_bounded_deterministic_document() {
        let cal = fake_cal(50_000);
        let svg = pp_plot_svg(&cal);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg, pp_plot_svg(&cal));
        // thinning keeps the document small even for huge masks
        assert!(svg.len() < 200_000, "svg is {} bytes", svg.len());
        assert!(svg.contains("100 realizations"));
    }

    #[test]
    fn thinning_always_keeps_the_extremes() {
        for n in [1usize, 2, 1499, 1500, 1501, 50_000] {
            let idx = thinned(n);
            assert_eq!(idx[0], 0);
            assert_eq!(*idx.last().unwrap(), n - 1);
            assert!(idx.len() <= MAX_POINTS + 1);
        }
    }
}
