use std::fmt::Write;

use super::{offset_from, PlacementPlan};

/// Cells to draw: the plan window, widened to cover every assignment.
fn extent(plan: &PlacementPlan) -> (i64, i64) {
    let mut hp = i64::from(plan.window.half_width_planes);
    let mut hw = i64::from(plan.window.half_width_index);
    for c in &plan.assignments {
        let (dp, di) = offset_from(plan.center, *c, &plan.spec);
        hp = hp.max(dp.abs());
        hw = hw.max(di.abs());
    }
    (hp, hw)
}

fn grid(plan: &PlacementPlan) -> (i64, i64, Vec<Vec<Option<usize>>>) {
    let (hp, hw) = extent(plan);
    let mut cells = vec![vec![None; (2 * hw + 1) as usize]; (2 * hp + 1) as usize];
    for (id, c) in plan.assignments.iter().enumerate() {
        let (dp, di) = offset_from(plan.center, *c, &plan.spec);
        cells[(dp + hp) as usize][(di + hw) as usize] = Some(id);
    }
    (hp, hw, cells)
}

/// Text grid of server ids. Rows are planes (north at the top), columns are
/// in-plane indices (west on the left); labels are 1-based, `*` marks the
/// overhead satellite and `.` an empty cell.
pub fn render_ascii(plan: &PlacementPlan) -> String {
    let (hp, hw, cells) = grid(plan);
    let spec = &plan.spec;
    let width = plan.n_servers().saturating_sub(1).to_string().len().max(2) + 2;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {} {}x{}, {} servers, epoch {}, overhead plane {} satellite {}",
        plan.strategy,
        plan.window.rows(),
        plan.window.cols(),
        plan.n_servers(),
        plan.epoch,
        plan.center.plane + 1,
        plan.center.index + 1
    );
    let _ = write!(out, "{:>5}", "");
    for di in -hw..=hw {
        let sat = plan.center.offset(0, di, spec).index + 1;
        let _ = write!(out, "{:>width$}", format!("s{sat}"));
    }
    out.push('\n');
    for (row, dp) in (-hp..=hp).enumerate() {
        let orb = plan.center.offset(dp, 0, spec).plane + 1;
        let _ = write!(out, "{:>5}", format!("o{orb}"));
        for (col, di) in (-hw..=hw).enumerate() {
            let marker = if dp == 0 && di == 0 { "*" } else { "" };
            let label = match cells[row][col] {
                Some(id) => format!("{marker}{id}"),
                None => format!("{marker}."),
            };
            let _ = write!(out, "{label:>width$}");
        }
        out.push('\n');
    }
    out
}

const CELL: i64 = 36;
const MARGIN: i64 = 40;

/// SVG grid: window cells filled orange, the overhead satellite circled in
/// green, server ids as text.
pub fn render_svg(plan: &PlacementPlan) -> String {
    let (hp, hw, cells) = grid(plan);
    let spec = &plan.spec;
    let cols = 2 * hw + 1;
    let rows = 2 * hp + 1;
    let w = cols * CELL + 2 * MARGIN;
    let h = rows * CELL + 2 * MARGIN;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="monospace" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="16">{} {}x{} ({} servers)</text>"#,
        plan.strategy,
        plan.window.rows(),
        plan.window.cols(),
        plan.n_servers()
    );
    for (row, dp) in (-hp..=hp).enumerate() {
        let y = MARGIN + row as i64 * CELL;
        let orb = plan.center.offset(dp, 0, spec).plane + 1;
        let _ = writeln!(out, r#"<text x="4" y="{}">o{orb}</text>"#, y + CELL / 2 + 4);
        for (col, di) in (-hw..=hw).enumerate() {
            let x = MARGIN + col as i64 * CELL;
            if row == 0 {
                let sat = plan.center.offset(0, di, spec).index + 1;
                let _ = writeln!(
                    out,
                    r#"<text x="{}" y="{}" text-anchor="middle">s{sat}</text>"#,
                    x + CELL / 2,
                    MARGIN - 6
                );
            }
            let inside = dp.unsigned_abs() <= u64::from(plan.window.half_width_planes)
                && di.unsigned_abs() <= u64::from(plan.window.half_width_index);
            let fill = if inside { "#f5a623" } else { "#ffffff" };
            let _ = writeln!(
                out,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="#333333"/>"##
            );
            if dp == 0 && di == 0 {
                let _ = writeln!(
                    out,
                    r##"<circle cx="{}" cy="{}" r="{}" fill="none" stroke="#2e9e44" stroke-width="3"/>"##,
                    x + CELL / 2,
                    y + CELL / 2,
                    CELL / 2 - 3
                );
            }
            if let Some(id) = cells[row][col] {
                let _ = writeln!(
                    out,
                    r#"<text x="{}" y="{}" text-anchor="middle">{id}</text>"#,
                    x + CELL / 2,
                    y + CELL / 2 + 4
                );
            }
        }
    }
    out.push_str("</svg>\n");
    out
}
