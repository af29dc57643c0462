use ct2mr_data::{make_phantom_corpus, DataError, Manifest, PhantomConfig};

fn read_dir_sorted(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    entries
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().to_string(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn same_seed_same_bytes() {
    let cfg = PhantomConfig {
        n_subjects: 3,
        size: 32,
        slices_range: (2, 5),
        seed: 99,
        ..PhantomConfig::default()
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    make_phantom_corpus(&cfg, d1.path()).unwrap();
    make_phantom_corpus(&cfg, d2.path()).unwrap();
    let a = read_dir_sorted(d1.path());
    let b = read_dir_sorted(d2.path());
    assert_eq!(a.len(), b.len());
    for ((n1, c1), (n2, c2)) in a.iter().zip(b.iter()) {
        assert_eq!(n1, n2);
        assert_eq!(c1, c2, "file {n1} differs between runs");
    }

    let d3 = tempfile::tempdir().unwrap();
    make_phantom_corpus(&PhantomConfig { seed: 100, ..cfg }, d3.path()).unwrap();
    let c = read_dir_sorted(d3.path());
    assert!(a.iter().zip(c.iter()).any(|((_, x), (_, y))| x != y));
}

#[test]
fn masks_nonempty_inside_brain_with_dwi_contrast() {
    let cfg = PhantomConfig {
        n_subjects: 10,
        scans_per_subject: 2,
        size: 48,
        slices_range: (2, 8),
        seed: 5,
        ..PhantomConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_phantom_corpus(&cfg, dir.path()).unwrap();
    assert_eq!(manifest.n_scans(), 20);

    let mut contrasts = Vec::new();
    for (sid, entry) in manifest.scan_entries() {
        let rec = manifest.load_scan(dir.path(), sid, entry).unwrap();
        let lesion_voxels = rec.mask.iter().filter(|&&v| v == 1).count();
        assert!(lesion_voxels > 0, "{}: empty mask", rec.scan_id);

        // lesion voxels sit inside the brain: background is exactly -1,
        // brain tissue is far above it
        let dwi = rec.dwi.data();
        let mut inside_sum = 0.0f64;
        let mut outside_sum = 0.0f64;
        let mut outside_n = 0usize;
        for (i, &m) in rec.mask.iter().enumerate() {
            if m == 1 {
                assert!(dwi[i] > -0.9, "{}: lesion voxel outside brain", rec.scan_id);
                inside_sum += dwi[i] as f64;
            } else if dwi[i] == -1.0 {
                outside_sum += dwi[i] as f64;
                outside_n += 1;
            }
        }
        assert!(outside_n > 0);
        contrasts.push(inside_sum / lesion_voxels as f64 - outside_sum / outside_n as f64);
    }
    let mean_contrast = contrasts.iter().sum::<f64>() / contrasts.len() as f64;
    assert!(
        mean_contrast >= 0.5,
        "mean lesion-vs-background contrast {mean_contrast}"
    );
}

#[test]
fn manifest_roundtrip_preserves_structure() {
    let cfg = PhantomConfig {
        n_subjects: 4,
        size: 32,
        slices_range: (2, 4),
        seed: 21,
        ..PhantomConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_phantom_corpus(&cfg, dir.path()).unwrap();
    let reloaded = Manifest::load(dir.path().join("manifest.json")).unwrap();
    assert_eq!(reloaded.spacing_mm, manifest.spacing_mm);
    assert_eq!(reloaded.subject_ids(), manifest.subject_ids());
    assert_eq!(reloaded.n_scans(), manifest.n_scans());
    for ((id_a, a), (id_b, b)) in reloaded.scan_entries().zip(manifest.scan_entries()) {
        assert_eq!(id_a, id_b);
        assert_eq!(a.ctp, b.ctp);
        assert_eq!(a.slices, b.slices);
        assert_eq!(a.scan_id(), b.scan_id());
    }
}

#[test]
fn scan_invariants_validated_on_load() {
    let cfg = PhantomConfig {
        n_subjects: 1,
        size: 32,
        slices_range: (3, 3),
        seed: 2,
        ..PhantomConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_phantom_corpus(&cfg, dir.path()).unwrap();
    let entry = &manifest.subjects[0].scans[0];

    // corrupt one mask byte to a non-binary value
    let mask_path = dir.path().join(&entry.mask);
    let mut bytes = std::fs::read(&mask_path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] = 7;
    std::fs::write(&mask_path, bytes).unwrap();
    match manifest.load_scan(dir.path(), "s001", entry) {
        Err(DataError::InvalidScan { details, .. }) => {
            assert!(details.contains("binary"), "{details}")
        }
        other => panic!("expected InvalidScan, got {other:?}"),
    }
}

#[test]
fn jittered_scan_counts_stay_deterministic() {
    let cfg = PhantomConfig {
        n_subjects: 6,
        scans_per_subject: 1,
        size: 32,
        slices_range: (2, 3),
        jitter_scans: true,
        seed: 31,
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let m1 = make_phantom_corpus(&cfg, d1.path()).unwrap();
    let m2 = make_phantom_corpus(&cfg, d2.path()).unwrap();
    let counts1: Vec<usize> = m1.subjects.iter().map(|s| s.scans.len()).collect();
    let counts2: Vec<usize> = m2.subjects.iter().map(|s| s.scans.len()).collect();
    assert_eq!(counts1, counts2);
    assert!(counts1.iter().all(|&c| c == 1 || c == 2));
}
