//! Attack campaign reporting: ERA as a function of attack cost (L0
//! distance or mutation-trace length), as CSV and SVG.

use super::AttackResult;

/// Monotone non-increasing step curve: ERA remaining after granting the
/// attacker up to `cost`.
#[derive(Clone, Debug, PartialEq)]
pub struct EraCurve {
    /// (cost, era) points at each distinct success cost, cost ascending.
    pub points: Vec<(usize, f64)>,
    pub total: usize,
}

fn curve_from_costs(costs: &[usize], total: usize) -> EraCurve {
    let mut sorted = costs.to_vec();
    sorted.sort_unstable();
    let mut points = Vec::new();
    if total == 0 {
        return EraCurve { points, total };
    }
    points.push((0, 1.0 - sorted.iter().filter(|c| **c == 0).count() as f64 / total as f64));
    let mut evaded = sorted.iter().filter(|c| **c == 0).count();
    let mut i = sorted.iter().filter(|c| **c == 0).count();
    while i < sorted.len() {
        let cost = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == cost {
            j += 1;
        }
        evaded += j - i;
        points.push((cost, 1.0 - evaded as f64 / total as f64));
        i = j;
    }
    EraCurve { points, total }
}

impl EraCurve {
    pub fn is_monotone_non_increasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12)
    }

    /// ERA at a given budget.
    pub fn era_at(&self, cost: usize) -> f64 {
        let mut era = 1.0;
        for (c, e) in &self.points {
            if *c <= cost {
                era = *e;
            } else {
                break;
            }
        }
        era
    }
}

/// ERA versus L0 feature distance of the successful attacks.
pub fn era_vs_l0(results: &[AttackResult]) -> EraCurve {
    let costs: Vec<usize> = results
        .iter()
        .filter(|r| r.success)
        .filter_map(|r| r.l0_distance)
        .collect();
    curve_from_costs(&costs, results.len())
}

/// ERA versus mutation-trace length of the successful attacks.
pub fn era_vs_trace_len(results: &[AttackResult]) -> EraCurve {
    let costs: Vec<usize> = results
        .iter()
        .filter(|r| r.success)
        .map(|r| r.mutation_trace.len())
        .collect();
    curve_from_costs(&costs, results.len())
}

pub fn curves_to_csv(series: &[(&str, &EraCurve)]) -> String {
    let mut out = String::from("series,cost,era\n");
    for (name, curve) in series {
        for (cost, era) in &curve.points {
            out.push_str(&format!("{name},{cost},{era}\n"));
        }
    }
    out
}

/// Both standard curves for one result set.
pub fn attack_report(results: &[AttackResult]) -> (EraCurve, EraCurve) {
    (era_vs_l0(results), era_vs_trace_len(results))
}

/// Minimal standalone SVG step plot of some ERA curves.
pub fn render_svg(series: &[(&str, &EraCurve)], title: &str, xlabel: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    let max_x = series
        .iter()
        .flat_map(|(_, c)| c.points.iter().map(|(x, _)| *x))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
        W / 2.0
    );
    let sx = |x: f64| M + (W - 2.0 * M) * (x / max_x);
    let sy = |y: f64| H - M - (H - 2.0 * M) * y;
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{xlabel}</text>\n\
         <text x=\"15\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 15 {})\">ERA</text>\n",
        sx(0.0),
        sy(0.0),
        sx(max_x),
        sy(0.0),
        sx(0.0),
        sy(0.0),
        sx(0.0),
        sy(1.0),
        W / 2.0,
        H - 12.0,
        H / 2.0,
        H / 2.0,
    ));
    for (si, (name, curve)) in series.iter().enumerate() {
        let color = colors[si % colors.len()];
        let mut d = String::new();
        let mut last_y = 1.0;
        d.push_str(&format!("M {} {}", sx(0.0), sy(1.0)));
        for (cost, era) in &curve.points {
            d.push_str(&format!(" L {} {}", sx(*cost as f64), sy(last_y)));
            d.push_str(&format!(" L {} {}", sx(*cost as f64), sy(*era)));
            last_y = *era;
        }
        d.push_str(&format!(" L {} {}", sx(max_x), sy(last_y)));
        out.push_str(&format!(
            "<path d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{name}</text>\n",
            W - M - 120.0,
            30.0 + 14.0 * si as f64,
        ));
    }
    out.push_str("</svg>\n");
    out
}
