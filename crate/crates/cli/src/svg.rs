//! Minimal hand-rolled SVG plots.
//!
//! Two figures: a per-window loss trace with the attack interval shaded
//! and the verdict threshold drawn as a dashed line, and a per-class loss
//! distribution as box plots (min, quartiles, max). Output is plain text
//! built from deterministic number formatting, so identical inputs render
//! byte-identical files.

use uav_ids_core::detector::Quartiles;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt(v: f64) -> String {
    format!("{:.3}", v)
}

struct Frame {
    x_min: f64,
    x_span: f64,
    y_min: f64,
    y_span: f64,
}

impl Frame {
    fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Frame {
        Frame {
            x_min,
            x_span: (x_max - x_min).max(1e-12),
            y_min,
            y_span: (y_max - y_min).max(1e-12),
        }
    }

    fn x(&self, v: f64) -> f64 {
        MARGIN_LEFT + (v - self.x_min) / self.x_span * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        // SVG y grows downward.
        HEIGHT - MARGIN_BOTTOM - (v - self.y_min) / self.y_span * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn document(title: &str, body: &str, x_label: &str, y_label: &str, frame: &Frame) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        WIDTH, HEIGHT, WIDTH, HEIGHT
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(title)
    ));
    // Axes.
    out.push_str(&format!(
        "<line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = MARGIN_LEFT,
        t = MARGIN_TOP,
        b = HEIGHT - MARGIN_BOTTOM,
        r = WIDTH - MARGIN_RIGHT
    ));
    // Extremal tick labels.
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
        MARGIN_LEFT - 6.0,
        HEIGHT - MARGIN_BOTTOM + 4.0,
        fmt(frame.y_min)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
        MARGIN_LEFT - 6.0,
        MARGIN_TOP + 4.0,
        fmt(frame.y_min + frame.y_span)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        HEIGHT - 12.0,
        xml_escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
        xml_escape(y_label)
    ));
    out.push_str(body);
    out.push_str("</svg>\n");
    out
}

/// Loss trace over window time with the verdict threshold (dashed) and an
/// optional shaded attack interval.
pub fn loss_trace(
    title: &str,
    points: &[(f64, f64)],
    threshold: f64,
    attack_span: Option<(f64, f64)>,
) -> String {
    let x_min = points.first().map(|p| p.0).unwrap_or(0.0);
    let x_max = points.last().map(|p| p.0).unwrap_or(1.0);
    let y_max = points
        .iter()
        .map(|p| p.1)
        .fold(threshold, f64::max)
        .max(1e-12)
        * 1.05;
    let frame = Frame::new(x_min, x_max, 0.0, y_max);

    let mut body = String::new();
    if let Some((a, b)) = attack_span {
        body.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#f4c7c3\" fill-opacity=\"0.6\"/>\n",
            fmt(frame.x(a)),
            MARGIN_TOP,
            fmt((frame.x(b) - frame.x(a)).max(1.0)),
            HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
        ));
    }
    body.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#888888\" stroke-dasharray=\"6 4\"/>\n",
        MARGIN_LEFT,
        fmt(frame.y(threshold)),
        WIDTH - MARGIN_RIGHT,
        fmt(frame.y(threshold))
    ));
    let coords: Vec<String> = points
        .iter()
        .map(|&(t, l)| format!("{},{}", fmt(frame.x(t)), fmt(frame.y(l))))
        .collect();
    body.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#1a57a6\" stroke-width=\"1.5\"/>\n",
        coords.join(" ")
    ));
    document(title, &body, "window time (s)", "reconstruction loss", &frame)
}

/// Box plots of per-class loss distributions; benign-only input renders a
/// single box.
pub fn loss_distribution(title: &str, classes: &[(&str, Quartiles)]) -> String {
    let y_max = classes
        .iter()
        .map(|(_, q)| q.max)
        .fold(1e-12_f64, f64::max)
        * 1.05;
    let frame = Frame::new(0.0, classes.len() as f64, 0.0, y_max);

    let mut body = String::new();
    let slot = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / classes.len() as f64;
    for (i, (name, q)) in classes.iter().enumerate() {
        let cx = MARGIN_LEFT + slot * (i as f64 + 0.5);
        let half = slot * 0.15;
        // Whiskers.
        body.push_str(&format!(
            "<line x1=\"{cx}\" y1=\"{}\" x2=\"{cx}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(frame.y(q.min)),
            fmt(frame.y(q.q1)),
            cx = fmt(cx)
        ));
        body.push_str(&format!(
            "<line x1=\"{cx}\" y1=\"{}\" x2=\"{cx}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(frame.y(q.q3)),
            fmt(frame.y(q.max)),
            cx = fmt(cx)
        ));
        // Interquartile box and median.
        body.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#c3d5f4\" stroke=\"black\"/>\n",
            fmt(cx - half),
            fmt(frame.y(q.q3)),
            fmt(2.0 * half),
            fmt((frame.y(q.q1) - frame.y(q.q3)).max(0.5))
        ));
        body.push_str(&format!(
            "<line x1=\"{}\" y1=\"{m}\" x2=\"{}\" y2=\"{m}\" stroke=\"black\" stroke-width=\"2\"/>\n",
            fmt(cx - half),
            fmt(cx + half),
            m = fmt(frame.y(q.median))
        ));
        body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            fmt(cx),
            HEIGHT - MARGIN_BOTTOM + 18.0,
            xml_escape(name)
        ));
    }
    document(title, &body, "class", "reconstruction loss", &frame)
}
