use ct2mr_nn::{
    adam_step, collect_grads, load_checkpoint, load_params, normal_tensor, register_conv,
    save_checkpoint, AdamHyper, AdamState, NnError, ParamSet,
};
use ct2mr_tensor::{ConvGeometry, Tape, Tensor};

fn sample_params() -> ParamSet {
    let mut ps = ParamSet::new();
    ps.insert("g.c1.weight", normal_tensor(&[4, 2, 3, 3], 0.02, 1)).unwrap();
    ps.insert("g.c1.bias", Tensor::zeros(&[4])).unwrap();
    ps.insert("g.head.weight", normal_tensor(&[1, 4, 1, 1], 0.02, 2)).unwrap();
    ps
}

#[test]
fn roundtrip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    let ps = sample_params();
    save_checkpoint(&path, &ps, None).unwrap();
    let (loaded, adam) = load_checkpoint(&path).unwrap();
    assert!(adam.is_none());
    assert_eq!(loaded.len(), ps.len());
    for ((n1, t1), (n2, t2)) in loaded.iter().zip(ps.iter()) {
        assert_eq!(n1, n2);
        assert_eq!(t1.shape(), t2.shape());
        assert_eq!(t1.data(), t2.data());
    }
}

#[test]
fn roundtrip_with_optimizer_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    let mut ps = sample_params();
    let mut st = AdamState::new(&ps, AdamHyper::default());
    // run a couple of steps so the moment buffers are nonzero
    for step in 0..3 {
        let grads: Vec<Tensor> = ps
            .iter()
            .map(|(_, t)| normal_tensor(t.shape(), 0.5, 100 + step))
            .collect();
        adam_step(&mut ps, &grads, &mut st).unwrap();
    }
    save_checkpoint(&path, &ps, Some(&st)).unwrap();
    let (loaded, adam) = load_checkpoint(&path).unwrap();
    let adam = adam.expect("optimizer block present");
    assert_eq!(adam.step, 3);
    assert_eq!(adam.hyper, AdamHyper::default());
    for ((_, a), (_, b)) in loaded.iter().zip(ps.iter()) {
        assert_eq!(a.data(), b.data());
    }
    // continuing training from the reloaded state matches the original
    let mut ps2 = loaded;
    let mut st2 = adam;
    let g: Vec<Tensor> = ps
        .iter()
        .map(|(_, t)| normal_tensor(t.shape(), 0.5, 999))
        .collect();
    let mut ps_ref = ps.clone();
    let mut st_ref = st.clone();
    adam_step(&mut ps_ref, &g, &mut st_ref).unwrap();
    adam_step(&mut ps2, &g, &mut st2).unwrap();
    for ((_, a), (_, b)) in ps2.iter().zip(ps_ref.iter()) {
        assert_eq!(a.data(), b.data());
    }
}

#[test]
fn corrupted_magic_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    save_checkpoint(&path, &sample_params(), None).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] = b'X';
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(
        load_checkpoint(&path),
        Err(NnError::BadMagic { .. })
    ));
}

#[test]
fn truncated_payload_is_a_distinct_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    save_checkpoint(&path, &sample_params(), None).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
    assert!(matches!(
        load_checkpoint(&path),
        Err(NnError::Truncated(_))
    ));
}

#[test]
fn bad_version_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    save_checkpoint(&path, &sample_params(), None).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[4] = 9;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(NnError::BadVersion(9))));
}

#[test]
fn header_layout_arithmetic() {
    // One parameter "ab" of shape [2,3]: block header 4+1+4, entry
    // 2 + 2 + 1 + 2*4 + 6*4 bytes.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    let mut ps = ParamSet::new();
    ps.insert("ab", Tensor::zeros(&[2, 3])).unwrap();
    save_checkpoint(&path, &ps, None).unwrap();
    let len = std::fs::metadata(&path).unwrap().len();
    assert_eq!(len, (4 + 1 + 4) + (2 + 2 + 1 + 8 + 24));
}

#[test]
fn reloaded_parameters_reproduce_forward_output() {
    // tiny conv net: checkpointed weights must produce identical activations
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    let mut ps = ParamSet::new();
    register_conv(&mut ps, "c1", 8, 5, 3, 3, 11).unwrap();
    register_conv(&mut ps, "c2", 1, 8, 3, 3, 12).unwrap();
    save_checkpoint(&path, &ps, None).unwrap();
    let (reloaded, _) = load_checkpoint(&path).unwrap();
    reloaded.validate_schema(&ps.schema()).unwrap();

    let x = normal_tensor(&[1, 5, 16, 16], 1.0, 77);
    let forward = |params: &ParamSet| -> Tensor {
        let tape = Tape::new();
        let vars = load_params(&tape, params, false);
        let xv = tape.leaf(x.clone(), false);
        let geom = ConvGeometry { stride: 1, pad: 1, dilation: 1 };
        xv.conv2d(vars.get("c1.weight").unwrap(), vars.get("c1.bias").unwrap(), geom)
            .unwrap()
            .relu()
            .unwrap()
            .conv2d(vars.get("c2.weight").unwrap(), vars.get("c2.bias").unwrap(), geom)
            .unwrap()
            .tensor()
    };
    assert_eq!(forward(&ps).data(), forward(&reloaded).data());
}

#[test]
fn gradient_collection_reports_missing() {
    let mut ps = ParamSet::new();
    ps.insert("used", Tensor::zeros(&[2])).unwrap();
    ps.insert("unused", Tensor::zeros(&[2])).unwrap();
    let tape = Tape::new();
    let vars = load_params(&tape, &ps, true);
    let loss = vars.get("used").unwrap().sum_all().unwrap();
    let mut grads = tape.backward(loss).unwrap();
    assert!(matches!(
        collect_grads(&ps, &vars, &mut grads),
        Err(NnError::MissingGradient(name)) if name == "unused"
    ));
}
