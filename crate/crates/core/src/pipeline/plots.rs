use super::svg::{Frame, Svg};
use crate::evaluation::{CalibrationBins, DCalibrationBins, StratumCurve};

const STRATUM_COLORS: [&str; 3] = ["#d62728", "#ff7f0e", "#2ca02c"];

fn frame(x_max: f64, y_max: f64) -> Frame {
    Frame {
        left: 60.0,
        top: 30.0,
        width: 420.0,
        height: 300.0,
        x_max,
        y_max,
    }
}

/// Kaplan-Meier step curves per risk stratum up to `t_max`.
pub fn km_svg(curves: &[StratumCurve], t_max: f64) -> String {
    let mut svg = Svg::new(620.0, 390.0);
    let f = frame(t_max, 1.0);
    f.axes(&mut svg, "days", "survival");
    for (k, c) in curves.iter().enumerate() {
        let color = STRATUM_COLORS[k % STRATUM_COLORS.len()];
        let mut pts = vec![(f.x(0.0), f.y(1.0))];
        let mut s = 1.0;
        for (&t, &v) in c.curve.times.iter().zip(&c.curve.values) {
            if t > t_max {
                break;
            }
            pts.push((f.x(t), f.y(s)));
            pts.push((f.x(t), f.y(v)));
            s = v;
        }
        pts.push((f.x(t_max), f.y(s)));
        svg.polyline(&pts, color, c.stratum.as_str());
        let y = 50.0 + 20.0 * k as f64;
        svg.line(500.0, y, 520.0, y, color, 2.0);
        svg.text(525.0, y + 4.0, "start", 12.0, &format!("{} (n={})", c.stratum.as_str(), c.n));
    }
    svg.finish()
}

/// Predicted against observed event probability per bin, with the diagonal.
pub fn calibration_svg(bins: &CalibrationBins) -> String {
    let top = bins
        .predicted
        .iter()
        .chain(&bins.observed)
        .flatten()
        .fold(0.05f64, |m, v| m.max(*v));
    let lim = (top * 1.1).min(1.0);
    let mut svg = Svg::new(620.0, 390.0);
    let f = frame(lim, lim);
    f.axes(&mut svg, "predicted", "observed");
    svg.line(f.x(0.0), f.y(0.0), f.x(lim), f.y(lim), "#999999", 1.0);
    for (p, o) in bins.predicted.iter().zip(&bins.observed) {
        if let (Some(p), Some(o)) = (p, o) {
            svg.circle(f.x(*p), f.y(*o), 4.0, "#1f77b4");
        }
    }
    svg.text(500.0, 50.0, "start", 12.0, &format!("horizon {} days", bins.horizon));
    svg.finish()
}

/// D-calibration histogram with the uniform reference level.
pub fn d_calibration_svg(bins: &DCalibrationBins) -> String {
    let nb = bins.mass.len().max(1);
    let top = bins.mass.iter().fold(1.5 / nb as f64, |m, v| m.max(*v));
    let mut svg = Svg::new(620.0, 390.0);
    let f = frame(1.0, top * 1.1);
    f.axes(&mut svg, "survival probability bin", "proportion");
    for (b, m) in bins.mass.iter().enumerate() {
        let x0 = f.x(bins.edges[b]);
        let x1 = f.x(bins.edges[b + 1]);
        svg.rect(x0 + 1.0, f.y(*m), x1 - x0 - 2.0, f.y(0.0) - f.y(*m), "#1f77b4");
    }
    let level = 1.0 / nb as f64;
    svg.line(f.x(0.0), f.y(level), f.x(1.0), f.y(level), "black", 1.0);
    svg.finish()
}
