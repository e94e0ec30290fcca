//! Loss and accuracy curves rendered directly to SVG.

use std::fmt::Write as _;

use cookcnn::train::{EpochRecord, History};

const PANEL_W: f64 = 440.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_T: f64 = 40.0;
const GAP: f64 = 90.0;
const TRAIN_COLOR: &str = "#1f77b4";
const VAL_COLOR: &str = "#ff7f0e";

struct Panel<'a> {
    title: &'a str,
    ylabel: &'a str,
    x0: f64,
    y_max: f64,
    train: Vec<(usize, f64)>,
    val: Vec<(usize, f64)>,
}

/// Epochs where the learning rate differs from the previous row.
pub fn lr_changes(history: &History) -> Vec<usize> {
    history
        .records
        .windows(2)
        .filter(|w| w[1].lr != w[0].lr)
        .map(|w| w[1].epoch)
        .collect()
}

fn series(records: &[EpochRecord], f: impl Fn(&EpochRecord) -> f64) -> Vec<(usize, f64)> {
    records
        .iter()
        .map(|r| (r.epoch, f(r)))
        .filter(|(_, v)| v.is_finite())
        .collect()
}

pub fn render(history: &History) -> String {
    let records = &history.records;
    let max_epoch = records.iter().map(|r| r.epoch).max().unwrap_or(1).max(2);
    let loss_max = records
        .iter()
        .flat_map(|r| [r.train_loss, r.val_loss])
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-6)
        * 1.05;
    let panels = [
        Panel {
            title: "Loss",
            ylabel: "loss",
            x0: MARGIN_L,
            y_max: loss_max,
            train: series(records, |r| r.train_loss),
            val: series(records, |r| r.val_loss),
        },
        Panel {
            title: "Accuracy",
            ylabel: "accuracy",
            x0: MARGIN_L + PANEL_W + GAP,
            y_max: 1.0,
            train: series(records, |r| r.train_acc),
            val: series(records, |r| r.val_acc),
        },
    ];
    let width = MARGIN_L + 2.0 * PANEL_W + GAP + 30.0;
    let height = MARGIN_T + PANEL_H + 80.0;
    let changes = lr_changes(history);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for p in &panels {
        let x = |e: usize| p.x0 + (e as f64 - 1.0) / (max_epoch as f64 - 1.0) * PANEL_W;
        let y = |v: f64| MARGIN_T + PANEL_H - (v / p.y_max).clamp(0.0, 1.0) * PANEL_H;
        let bottom = MARGIN_T + PANEL_H;
        let _ = writeln!(s, r#"<g class="panel {}">"#, p.ylabel);
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{MARGIN_T:.1}" width="{PANEL_W:.1}" height="{PANEL_H:.1}" fill="none" stroke="black"/>"#,
            p.x0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{}</text>"#,
            p.x0 + PANEL_W / 2.0,
            MARGIN_T - 12.0,
            p.title
        );
        for i in 0..=4 {
            let v = p.y_max * i as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
                p.x0 - 6.0,
                y(v) + 4.0
            );
        }
        let ticks = 5.min(max_epoch - 1);
        for i in 0..=ticks {
            let e = 1 + (max_epoch - 1) * i / ticks;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{e}</text>"#,
                x(e),
                bottom + 16.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text class="axis-label" x="{:.1}" y="{:.1}" text-anchor="middle">epoch</text>"#,
            p.x0 + PANEL_W / 2.0,
            bottom + 36.0
        );
        let _ = writeln!(
            s,
            r#"<text class="axis-label" x="{:.1}" y="{:.1}" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
            p.x0 - 45.0,
            MARGIN_T + PANEL_H / 2.0,
            p.x0 - 45.0,
            MARGIN_T + PANEL_H / 2.0,
            p.ylabel
        );
        for &e in &changes {
            let _ = writeln!(
                s,
                r#"<line class="lr-change" x1="{0:.1}" y1="{MARGIN_T:.1}" x2="{0:.1}" y2="{bottom:.1}" stroke="red" stroke-dasharray="6,4"/>"#,
                x(e)
            );
        }
        let _ = writeln!(s, r#"<g class="curves {}">"#, p.ylabel);
        for (name, color, pts) in [("train", TRAIN_COLOR, &p.train), ("validation", VAL_COLOR, &p.val)] {
            let points: Vec<String> = pts.iter().map(|&(e, v)| format!("{:.2},{:.2}", x(e), y(v))).collect();
            let _ = writeln!(
                s,
                r#"<polyline class="{name}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                points.join(" ")
            );
        }
        let _ = writeln!(s, "</g>");
        for (i, (name, color)) in [("train", TRAIN_COLOR), ("validation", VAL_COLOR)].iter().enumerate() {
            let ly = MARGIN_T + 14.0 + i as f64 * 16.0;
            let lx = p.x0 + PANEL_W - 110.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{name}</text>"#,
                lx + 20.0,
                lx + 26.0,
                ly + 4.0
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}
