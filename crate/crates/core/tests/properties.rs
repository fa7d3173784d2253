use mhd_core::besov::besov_norm;
use mhd_core::fft::{dealiased_product, from_physical_real};
use mhd_core::field::{Levels, SpectralField};
use mhd_core::grid::GridSpec;
use mhd_core::io::{read_snapshot, write_snapshot};
use mhd_core::lp::{bony_decompose, default_partition};
use mhd_core::state::{Flavor, MhdState};
use proptest::prelude::*;

fn grid() -> GridSpec {
    GridSpec::periodic(32, 6).unwrap()
}

fn field_strategy() -> impl Strategy<Value = SpectralField> {
    let g = grid();
    prop::collection::vec(-1.0f64..1.0, g.nx * g.ny).prop_map(move |vals| {
        let rows: Vec<Vec<f64>> = vals.chunks(g.nx).map(|c| c.to_vec()).collect();
        from_physical_real(g, Levels::Nodes, &rows)
    })
}

fn zero_mean_strategy() -> impl Strategy<Value = SpectralField> {
    field_strategy().prop_map(|mut f| {
        f.project_zero_mean();
        f
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn blocks_sum_to_one(nx_pow in 4u32..10, ny in 4usize..40) {
        let g = GridSpec::periodic(1 << nx_pow, ny).unwrap();
        let p = default_partition(&g).unwrap();
        for k in 0..g.nx {
            if g.wavenumber(k) != 0.0 {
                let s: f64 = p.qs().map(|q| p.weight(q, k)).sum();
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn bony_parts_reassemble_the_product(f in field_strategy(), g in field_strategy()) {
        let p = default_partition(&grid()).unwrap();
        let fg = dealiased_product(&f, &g).unwrap();
        let mut d = bony_decompose(&p, &f, &g).unwrap().sum();
        d.axpy(-1.0, &fg);
        prop_assert!(d.l2_norm() <= 1e-12 * fg.l2_norm().max(1e-300));
    }

    #[test]
    fn besov_norm_is_a_norm(f in zero_mean_strategy(), g in zero_mean_strategy(), c in -4.0f64..4.0, s in -1.0f64..2.5) {
        let p = default_partition(&grid()).unwrap();
        let nf = besov_norm(&p, &f, s).unwrap();
        let ng = besov_norm(&p, &g, s).unwrap();
        let sum = besov_norm(&p, &(&f + &g), s).unwrap();
        prop_assert!(sum <= (nf + ng) * (1.0 + 1e-12));
        let scaled = besov_norm(&p, &f.scaled(c), s).unwrap();
        prop_assert!((scaled - c.abs() * nf).abs() <= 1e-12 * nf.max(1e-300));
    }

    #[test]
    fn snapshots_round_trip(f in field_strategy(), t in 0.0f64..10.0, theta in 0.0f64..1.0) {
        let mut s = MhdState::zeros(grid(), Flavor::Limit);
        s.time = t;
        s.u = f.clone();
        s.b = f.scaled(-0.5);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &s, 1.0, 64.0, theta).unwrap();
        let (h, back) = read_snapshot(&buf[..]).unwrap();
        prop_assert_eq!(back, s);
        prop_assert_eq!(h.theta, theta);
    }
}
