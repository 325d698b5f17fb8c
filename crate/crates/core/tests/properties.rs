use nalgebra::Vector4;
use proptest::prelude::*;

use ghostbohm::evolve::{evolve_packet, IntegratorConfig, PacketState, TimeGrid};
use ghostbohm::export::{read_csv, read_json, write_csv, write_json, Metadata, Record, SeriesBundle};
use ghostbohm::linalg::{Mat2, Vec2};
use ghostbohm::model::{build_biham_pair, build_ghost_model, classical_equivalence_residual, flow_spectrum};
use ghostbohm::trajectories::TrajectoryKind;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e3..1e3f64, -1.0..1.0f64, -1e-6..1e-6f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectrum_is_closed_under_negation_and_conjugation(nu in -1.0..1.0f64, omega in -1.0..1.0f64, g in -0.5..0.5f64) {
        let model = build_ghost_model(nu, omega, g, 1.0).unwrap();
        let eig = flow_spectrum(&model).eigenvalues;
        let scale = eig.iter().map(|l| l.norm()).fold(1.0, f64::max);
        for l in eig {
            for partner in [-l, l.conj()] {
                let d = eig.iter().map(|m| (m - partner).norm()).fold(f64::INFINITY, f64::min);
                prop_assert!(d < 1e-7 * scale, "{l} has no partner {partner} in {eig:?}");
            }
        }
    }

    #[test]
    fn pair_flows_agree_at_random_points(
        nu in 0.05..1.0f64,
        omega in -1.0..1.0f64,
        z in prop::array::uniform4(-5.0..5.0f64),
    ) {
        prop_assume!((nu * nu - omega).abs() > 1e-3);
        let pair = build_biham_pair(nu, omega, 1.0).unwrap();
        let z = Vector4::from(z);
        // rounding follows the size of J₂·Hess(H₂), which grows like 1/(ν² − Ω)
        let scale = (pair.j_2.amax() * pair.model_2.hessian().amax()).max(pair.flow_matrix_g().amax()) * z.amax().max(1.0);
        prop_assert!(classical_equivalence_residual(&pair, &z) < 1e-12 * scale);
    }

    #[test]
    fn riccati_keeps_widths_symmetric(
        nu in -0.5..0.5f64,
        omega in -0.5..0.5f64,
        g in -0.2..0.2f64,
        a in prop::array::uniform3(-1.0..1.0f64),
        b in prop::array::uniform3(-1.0..1.0f64),
    ) {
        let model = build_ghost_model(nu, omega, g, 1.0).unwrap();
        let sym = |v: [f64; 3]| Mat2::new(v[0], v[1], v[1], v[2]);
        let p0 = PacketState::new(0.0, Vec2::new(0.3, -0.2), Vec2::new(0.1, 0.4), sym(a), sym(b));
        let grid = TimeGrid::new(0.0, 2.0, 1e-2).unwrap();
        let series = evolve_packet(&p0, &model, &grid, &IntegratorConfig::default()).unwrap();
        for s in &series.states {
            prop_assert_eq!(s.a, s.a.transpose());
            prop_assert_eq!(s.b, s.b.transpose());
        }
    }

    #[test]
    fn csv_and_json_round_trip(rows in prop::collection::vec((finite(), finite(), finite(), any::<bool>(), 0usize..5), 1..20)) {
        let records: Vec<Record> = rows
            .iter()
            .enumerate()
            .map(|(i, &(t, x, y, bohmian, id))| Record {
                t: t + i as f64,
                member_id: id,
                kind: if bohmian { TrajectoryKind::Bohmian } else { TrajectoryKind::Classical },
                qx: x,
                qy: y,
                px: (!bohmian).then_some(y * 0.5),
                py: (!bohmian).then_some(-x),
                ux: bohmian.then_some(x - y),
                uy: bohmian.then_some(x * 1e-9),
                dx: bohmian.then_some(t),
                dy: bohmian.then_some(-t),
                det_lambda: bohmian.then_some(x * y),
                sm_eig1: bohmian.then_some(1.0 / 3.0),
                sm_eig2: bohmian.then_some(-2.0 / 7.0),
                q_b: bohmian.then_some(std::f64::consts::PI * x),
            })
            .collect();
        let bundle = SeriesBundle {
            metadata: Metadata {
                tool_version: "test".into(),
                seed: 7,
                plane: "x-y".into(),
                representation: None,
                scenario: serde_json::json!({ "name": "prop" }),
            },
            records,
        };
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("s.csv");
        write_csv(&bundle, &csv).unwrap();
        prop_assert_eq!(&read_csv(&csv).unwrap().records, &bundle.records);
        let json = dir.path().join("s.json");
        write_json(&bundle, &json).unwrap();
        prop_assert_eq!(read_json(&json).unwrap(), bundle);
    }
}
