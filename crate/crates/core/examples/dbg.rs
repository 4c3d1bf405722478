use millstab::model::*;
use millstab::zoa::*;

fn main() {
    let m = Mode::new(903.0, 12.53e6, 0.03).unwrap();
    let d = DirectionalDynamics::single(m, m);
    let c = CuttingParams::new(556.31, 0.404, 2, 0.0, 180.0).unwrap();
    let settings = SldSettings::covering(&d, &c, (5000.0, 25000.0));
    println!("max_lobes={}", settings.max_lobes);
    let curve = build_sld(&d, &c, (5000.0, 25000.0), &settings).unwrap();

    let scale = 2.7;
    let m2 = Mode::new(903.0, 12.53e6 * scale, 0.03).unwrap();
    let d2 = DirectionalDynamics::single(m2, m2);
    let c2 = CuttingParams::new(556.31 * scale, 0.404, 2, 0.0, 180.0).unwrap();
    let curve2 = build_sld(&d2, &c2, (5000.0, 25000.0), &settings).unwrap();

    println!("branches: {} vs {}", curve.branches.len(), curve2.branches.len());
    println!("env pts: {} vs {}", curve.envelope().points().len(), curve2.envelope().points().len());
    for (a, b) in curve.envelope().points().iter().zip(curve2.envelope().points()).step_by(200) {
        println!("s={:8.1} {:8.1}  d={:10.4} {:10.4}  ratio={:.4}", a.speed_rpm, b.speed_rpm, a.depth_mm, b.depth_mm, b.depth_mm/a.depth_mm);
    }
    // compare branch point counts
    for (ba, bb) in curve.branches.iter().zip(&curve2.branches) {
        if ba.points.len() != bb.points.len() {
            println!("branch root={} lobe={}: {} vs {} pts", ba.root_index, ba.lobe_index, ba.points.len(), bb.points.len());
        }
    }
}
