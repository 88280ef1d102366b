use mapdeblur::analysis::{
    format_sig9, log_space, ratio_histogram, read_records_csv, sort_records, write_records_csv,
    SweepRecord, CSV_HEADER,
};
use proptest::prelude::*;

fn record(image: &str, lambda_l: f64, ratio: f64) -> SweepRecord {
    SweepRecord {
        image_id: image.into(),
        kernel_id: "gt".into(),
        alpha: 0.1,
        lambda_l,
        f_irls_gt: ratio,
        f_opt_delta: 1.0,
        f_irls_delta: 1.25,
        ratio,
        prior_ratio: 0.5,
        converged_gt: true,
        converged_delta: false,
    }
}

#[test]
fn csv_round_trip_keeps_nine_digits() {
    let mut records = vec![record("b", 0.001, 0.75), record("a", 1e-5, 1.0 / 3.0)];
    sort_records(&mut records);
    let mut buf = Vec::new();
    write_records_csv(&records, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    assert!(text.contains(",0.333333333,"));

    let back = read_records_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[0].image_id, "a");
    assert!((back[0].ratio - 1.0 / 3.0).abs() < 1e-9);
    assert!(!back[1].converged_delta);

    let mut again = Vec::new();
    write_records_csv(&back, &mut again).unwrap();
    assert_eq!(again, buf);
}

#[test]
fn wrong_header_is_rejected() {
    let text = "image_id,kernel_id\nx,y\n";
    assert!(read_records_csv(text.as_bytes()).is_err());
}

#[test]
fn histogram_counts_successes_per_lambda() {
    let lambdas = [1e-4, 1e-3, 1e-2];
    let ratios = [[1.2, 0.8, 0.9], [1.1, 0.7, 1.3], [2.0, 0.95, 0.99]];
    let records: Vec<SweepRecord> = ratios
        .iter()
        .enumerate()
        .flat_map(|(i, rs)| {
            lambdas
                .iter()
                .zip(rs)
                .map(move |(&l, &r)| record(&format!("img{i}"), l, r))
        })
        .collect();
    let h = ratio_histogram(&records).unwrap();
    let counts: Vec<usize> = h.bins.iter().map(|b| b.successes).collect();
    assert_eq!(counts, [0, 3, 2]);
    assert_eq!(h.argmax_lambda, 1e-3);
    assert_eq!(h.argmax_index(), 1);
}

#[test]
fn log_space_endpoints() {
    let v = log_space(1e-5, 1e-1, 9);
    assert_eq!(v.len(), 9);
    assert!((v[0] - 1e-5).abs() < 1e-18);
    assert!((v[8] - 1e-1).abs() < 1e-15);
    assert!((v[4] - 1e-3).abs() < 1e-15);
}

proptest! {
    #[test]
    fn sig9_round_trips_to_nine_digits(x in -1e6f64..1e6) {
        let back: f64 = format_sig9(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 1e-8 * x.abs().max(1e-300));
    }

    #[test]
    fn log_space_is_geometric(lo in 1e-8f64..1e-2, span in 1.0f64..1e4, n in 3usize..20) {
        let v = log_space(lo, lo * span, n);
        let q = v[1] / v[0];
        for w in v.windows(2) {
            prop_assert!((w[1] / w[0] - q).abs() <= 1e-9 * q);
        }
    }
}
