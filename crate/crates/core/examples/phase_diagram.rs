//! Coarse NAND threshold map with 3000-fold repetition: which (p, sigma)
//! points fall below the multiplexing threshold. Writes an SVG heatmap to
//! the system temp directory.

use gridft::experiments::{output::phase_diagram_svg, phase_diagram};

fn main() {
    let ps = [0.0, 0.4, 0.8];
    let sigmas = [0.0, 0.6, 1.2];
    let d = phase_diagram(&ps, &sigmas, 10, 3000, 100, 1, 0.95, &|_| {});
    println!("threshold error {:.4}", d.eps0);
    println!("sigma \\ p  {}", ps.map(|p| format!("{p:<7}")).join(""));
    for (i, sigma) in sigmas.iter().enumerate().rev() {
        let row: Vec<String> = (0..ps.len())
            .map(|j| {
                let point = d.at(i, j);
                format!("{:.3}{}  ", point.estimate.error, if d.is_tolerant(point) { '+' } else { '-' })
            })
            .collect();
        println!("{sigma:<9}  {}", row.join(""));
    }
    println!("boundary (p, sigma): {:?}", d.boundary);
    let path = std::env::temp_dir().join("gridft_phase_diagram.svg");
    std::fs::write(&path, phase_diagram_svg(&d)).unwrap();
    println!("wrote {}", path.display());
}
