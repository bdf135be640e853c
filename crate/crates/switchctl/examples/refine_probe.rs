use switchctl::geometry::assemble_control_geometry_with_depth;
use switchctl::mesh::build_mesh;
use switchctl::system::{HeatSystem, StateTrajectory, TimeGrid, TimeProfile};

fn value(res: f64, depth: u32, grid: TimeGrid, u: &TimeProfile) -> f64 {
    let mesh = build_mesh(res).unwrap();
    let geometry = assemble_control_geometry_with_depth(&mesh, 2, depth);
    let zero = StateTrajectory::zeros(grid.intervals() + 1, mesh.n_vertices());
    let sys = HeatSystem::with_target(mesh, geometry, grid, zero).unwrap();
    let y = sys.apply_s(u);
    sys.tracking_value(&y)
}

fn main() {
    let grid = TimeGrid::new(2.0, 100).unwrap();
    let u = TimeProfile::from_fn(100, 2, |m, i| {
        let t = grid.midpoint_time(m);
        if i == 0 { (1.3 * t).sin() + 0.5 } else { (0.9 * t).cos() }
    });
    for depth in [6u32, 8] {
        for (a, b, c) in [(0.2, 0.1, 0.05), (0.1, 0.05, 0.025), (0.05, 0.025, 0.0125)] {
            let va = value(a, depth, grid, &u);
            let vb = value(b, depth, grid, &u);
            let vc = value(c, depth, grid, &u);
            let ratio = (va - vb).abs() / (vb - vc).abs();
            println!("depth {depth} res ({a},{b},{c}): J = {va:.10e} {vb:.10e} {vc:.10e} ratio {ratio:.3}");
        }
    }
}
