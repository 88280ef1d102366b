use mapdeblur::apps::{
    canny_edges, propagate_defocus, select_kernel_size, DefocusParams, DefocusSample,
    EdgeMask, MattingLaplacian, SizeSettings, SparseDefocusMap,
};
use mapdeblur::synthetic::{blurred_pair, SceneStyle};
use mapdeblur::{BlurKernel, EnergyParams, Image};

#[test]
fn canny_traces_a_disc_outline() {
    let (cx, cy, radius) = (31.5, 31.5, 14.0);
    let img = Image::from_fn(64, 64, |r, c| {
        let d = ((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt();
        if d < radius { 0.9 } else { 0.1 }
    });
    let edges = canny_edges(&img, 0.05, 0.15);
    assert!(edges.count() > 60, "{} edge pixels", edges.count());
    for (r, c) in edges.pixels() {
        let d = ((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt();
        assert!((d - radius).abs() <= 1.5, "edge at ({r}, {c}) is {d:.2} from the centre");
    }
    // every octant of the circle is represented
    let mut octants = [false; 8];
    for (r, c) in edges.pixels() {
        let a = (r as f64 - cy).atan2(c as f64 - cx) + std::f64::consts::PI;
        octants[((a / std::f64::consts::FRAC_PI_4) as usize).min(7)] = true;
    }
    assert!(octants.iter().all(|&o| o));
}

#[test]
fn canny_on_flat_image_is_empty() {
    let edges = canny_edges(&Image::filled(20, 20, 0.5f64), 0.05, 0.15);
    assert_eq!(edges.count(), 0);
}

#[test]
fn matting_laplacian_is_symmetric_and_kills_constants() {
    let guide = Image::from_fn(9, 7, |r, c| ((r * 7 + c * 3) % 11) as f64 / 11.0);
    let lap = MattingLaplacian::new(&guide, 3, 1e-5).unwrap();
    let n = lap.len();
    let dense = lap.to_dense();
    for i in 0..n {
        for j in 0..n {
            assert!((dense[i * n + j] - dense[j * n + i]).abs() < 1e-10);
        }
    }
    let mut out = vec![0.0; n];
    lap.apply(&vec![3.0; n], &mut out);
    assert!(out.iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn propagation_of_a_constant_radius_is_constant() {
    let (w, h) = (20, 16);
    let guide = Image::from_fn(w, h, |r, c| if (r + c) % 5 == 0 { 0.8 } else { 0.2 });
    let samples = (0..h)
        .step_by(3)
        .flat_map(|r| (0..w).step_by(4).map(move |c| (r, c)))
        .map(|(row, col)| DefocusSample { row, col, radius: 3.0, energy: 0.0 })
        .collect();
    let sparse = SparseDefocusMap {
        width: w,
        height: h,
        samples,
        skipped: Vec::new(),
        edges: EdgeMask::empty(w, h),
    };
    let dense = propagate_defocus::<f64>(&sparse, &guide, &DefocusParams::default()).unwrap();
    assert!(dense.converged);
    assert!(dense.map.data().iter().all(|d| (d - 3.0).abs() < 1e-6));
}

#[test]
fn size_selection_on_unblurred_image_keeps_the_delta() {
    let pair = blurred_pair(48, 48, SceneStyle::StepRich, &BlurKernel::<f64>::delta(1, 1), 5).unwrap();
    let settings = SizeSettings { iters_per_level: 3, ..SizeSettings::default() };
    let sel = select_kernel_size(&pair.blurred_gradients(), &[1, 5], &EnergyParams::default(), settings).unwrap();
    assert_eq!(sel.candidates.len(), 2);
    assert_eq!(sel.best, 1);
}
