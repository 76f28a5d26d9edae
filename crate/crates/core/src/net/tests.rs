use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::*;
use crate::cloud::Point;
use crate::rng::stream;

fn rand_mat(r: usize, c: usize, seed: u64) -> Mat<f64> {
    let mut rng = stream(seed, &[]);
    Mat::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn store(entries: &[(&str, Mat<f64>)]) -> ParamStore<f64> {
    ParamStore(entries.iter().map(|(k, v)| ((*k).into(), v.clone())).collect())
}

fn identity(n: usize) -> Mat<f64> {
    let mut m = Mat::zeros(n, n);
    for i in 0..n {
        m.set(i, i, 1.0);
    }
    m
}

fn naive_affine(x: &Mat<f64>, w: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    let mut out = Mat::zeros(x.rows(), w.cols());
    for i in 0..x.rows() {
        for j in 0..w.cols() {
            let mut s = b.get(0, j);
            for k in 0..x.cols() {
                s += x.get(i, k) * w.get(k, j);
            }
            out.set(i, j, s);
        }
    }
    out
}

fn close(a: &Mat<f64>, b: &Mat<f64>, tol: f64) -> bool {
    a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= tol)
}

fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = stream(seed, &[]);
    let pts = (0..n)
        .map(|_| {
            let p = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
            let nrm = crate::mat::normalized(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0]);
            Point::new(p, [nrm[0], nrm[1], nrm[2]], [rng.random(), rng.random(), rng.random()])
        })
        .collect();
    PointCloud::new(pts).unwrap()
}

#[test]
fn embed_zero_weights_give_zeros() {
    let s = store(&[("embed.weight", Mat::zeros(9, 4)), ("embed.bias", Mat::zeros(1, 4))]);
    let mut g = Graph::new(&s);
    let x = g.tape.leaf(rand_mat(5, 9, 1));
    let y = embed_points(&mut g, x).unwrap();
    assert_eq!(g.value(y), &Mat::zeros(5, 4));
}

#[test]
fn embed_identity_passes_input_through() {
    let s = store(&[("embed.weight", identity(9)), ("embed.bias", Mat::zeros(1, 9))]);
    let mut g = Graph::new(&s);
    let input = rand_mat(4, 9, 2);
    let x = g.tape.leaf(input.clone());
    let y = embed_points(&mut g, x).unwrap();
    assert_eq!(g.value(y), &input);
}

#[test]
fn embed_matches_triple_loop() {
    let (w, b, input) = (rand_mat(9, 6, 3), rand_mat(1, 6, 4), rand_mat(3, 9, 5));
    let s = store(&[("embed.weight", w.clone()), ("embed.bias", b.clone())]);
    let mut g = Graph::new(&s);
    let x = g.tape.leaf(input.clone());
    let y = embed_points(&mut g, x).unwrap();
    assert!(close(g.value(y), &naive_affine(&input, &w, &b), 1e-12));
}

#[test]
fn embed_rejects_wrong_width() {
    let s = store(&[("embed.weight", Mat::zeros(9, 4)), ("embed.bias", Mat::zeros(1, 4))]);
    let mut g = Graph::new(&s);
    let x = g.tape.leaf(rand_mat(2, 7, 1));
    assert!(matches!(embed_points(&mut g, x), Err(Error::Shape(_))));
}

fn level(grid: &[[u32; 3]]) -> Level {
    Level {
        grid: grid.to_vec(),
        positions: grid.iter().map(|g| g.map(|v| v as f64 * 0.02)).collect(),
        voxel_size: 0.02,
    }
}

#[test]
fn cpe_of_isolated_point() {
    let (w, b) = (rand_mat(3, 3, 6), rand_mat(1, 3, 7));
    let s = store(&[("cpe.weight", w.clone()), ("cpe.bias", b.clone())]);
    let f = rand_mat(1, 3, 8);
    let mut g = Graph::new(&s);
    let x = g.tape.leaf(f.clone());
    let y = cond_pos_encode(&mut g, x, &voxel_neighborhoods(&level(&[[4, 4, 4]]))).unwrap();
    let mut expect = naive_affine(&f, &w, &b);
    expect.add_assign(&f);
    assert!(close(g.value(y), &expect, 1e-12));
}

#[test]
fn cpe_zero_weights_is_identity() {
    let s = store(&[("cpe.weight", Mat::zeros(3, 3)), ("cpe.bias", Mat::zeros(1, 3))]);
    let f = rand_mat(3, 3, 9);
    let mut g = Graph::new(&s);
    let x = g.tape.leaf(f.clone());
    let y = cond_pos_encode(&mut g, x, &voxel_neighborhoods(&level(&[[0, 0, 0], [1, 0, 0], [7, 7, 7]]))).unwrap();
    assert_eq!(g.value(y), &f);
}

#[test]
fn cpe_averages_adjacent_voxels() {
    let lv = level(&[[0, 0, 0], [1, 0, 0], [5, 5, 5]]);
    let (w, b, f) = (rand_mat(2, 2, 10), rand_mat(1, 2, 11), rand_mat(3, 2, 12));
    let s = store(&[("cpe.weight", w.clone()), ("cpe.bias", b.clone())]);
    let mut g = Graph::new(&s);
    let x = g.tape.leaf(f.clone());
    let y = cond_pos_encode(&mut g, x, &voxel_neighborhoods(&lv)).unwrap();
    // O(N^2) scan over positions: neighbours are within one voxel per axis
    let mut avg = Mat::zeros(3, 2);
    for i in 0..3 {
        let nb: Vec<usize> = (0..3)
            .filter(|&j| (0..3).all(|a| (lv.positions[i][a] - lv.positions[j][a]).abs() < 0.02 * 1.5))
            .collect();
        for c in 0..2 {
            avg.set(i, c, nb.iter().map(|&j| f.get(j, c)).sum::<f64>() / nb.len() as f64);
        }
    }
    let mut expect = naive_affine(&avg, &w, &b);
    expect.add_assign(&f);
    assert!(close(g.value(y), &expect, 1e-12));
}

fn attention_store(w: usize, seed: u64, out_identity: bool) -> ParamStore<f64> {
    let mut entries = Vec::new();
    for (i, p) in ["q", "k", "v", "out"].iter().enumerate() {
        let weight = if *p == "out" && out_identity { identity(w) } else { rand_mat(w, w, seed + i as u64) };
        let bias = if *p == "out" && out_identity { Mat::zeros(1, w) } else { rand_mat(1, w, seed + 10 + i as u64) };
        entries.push((alloc::format!("a.{p}.weight"), weight));
        entries.push((alloc::format!("a.{p}.bias"), bias));
    }
    ParamStore(entries.into_iter().collect())
}

#[test]
fn single_point_block_yields_value_projection() {
    let s = attention_store(4, 20, true);
    let f = rand_mat(3, 4, 21);
    let mut g = Graph::new(&s);
    let x = g.tape.leaf(f.clone());
    let layout = BlockLayout { order: vec![1, 2, 0], blocks: vec![(0, 1), (1, 2), (2, 3)] };
    let y = block_attention(&mut g, x, &layout, 2, "a").unwrap();
    let v = naive_affine(&f, s.get("a.v.weight").unwrap(), s.get("a.v.bias").unwrap());
    assert!(close(g.value(y), &v, 1e-12));
}

#[test]
fn identical_rows_attend_identically() {
    let s = attention_store(4, 30, false);
    let mut f = rand_mat(4, 4, 31);
    let r0 = f.row(0).to_vec();
    f.row_mut(2).copy_from_slice(&r0);
    let mut g = Graph::new(&s);
    let x = g.tape.leaf(f);
    let layout = BlockLayout { order: vec![0, 1, 2, 3], blocks: vec![(0, 4)] };
    let y = block_attention(&mut g, x, &layout, 2, "a").unwrap();
    assert_eq!(g.value(y).row(0), g.value(y).row(2));
}

#[test]
fn attention_rejects_indivisible_heads() {
    let s = attention_store(4, 30, false);
    let mut g = Graph::new(&s);
    let x = g.tape.leaf(rand_mat(2, 4, 1));
    let layout = BlockLayout { order: vec![0, 1], blocks: vec![(0, 2)] };
    assert!(matches!(block_attention(&mut g, x, &layout, 3, "a"), Err(Error::Config(_))));
}

#[test]
fn block_isolation() {
    let s = attention_store(4, 40, false);
    let layout = BlockLayout { order: vec![4, 0, 3, 1, 2, 5], blocks: vec![(0, 3), (3, 6)] };
    let f = rand_mat(6, 4, 41);
    let mut zeroed = f.clone();
    for &r in &layout.order[3..6] {
        zeroed.row_mut(r).iter_mut().for_each(|v| *v = 0.0);
    }
    let run = |m: &Mat<f64>| {
        let mut g = Graph::new(&s);
        let x = g.tape.leaf(m.clone());
        let y = block_attention(&mut g, x, &layout, 2, "a").unwrap();
        g.value(y).clone()
    };
    let (a, b) = (run(&f), run(&zeroed));
    for &r in &layout.order[0..3] {
        assert_eq!(a.row(r), b.row(r));
    }
}

#[test]
fn zero_weight_transformer_layer_is_identity() {
    let w = 4;
    let mut entries: Vec<(alloc::string::String, Mat<f64>)> = Vec::new();
    for n in ["norm1", "norm2"] {
        entries.push((alloc::format!("t.{n}.gamma"), rand_mat(1, w, 1)));
        entries.push((alloc::format!("t.{n}.beta"), rand_mat(1, w, 2)));
    }
    for p in ["q", "k", "v"] {
        entries.push((alloc::format!("t.attn.{p}.weight"), rand_mat(w, w, 3)));
        entries.push((alloc::format!("t.attn.{p}.bias"), rand_mat(1, w, 4)));
    }
    entries.push(("t.attn.out.weight".into(), Mat::zeros(w, w)));
    entries.push(("t.attn.out.bias".into(), Mat::zeros(1, w)));
    entries.push(("t.ffn.fc1.weight".into(), rand_mat(w, 4 * w, 5)));
    entries.push(("t.ffn.fc1.bias".into(), rand_mat(1, 4 * w, 6)));
    entries.push(("t.ffn.fc2.weight".into(), Mat::zeros(4 * w, w)));
    entries.push(("t.ffn.fc2.bias".into(), Mat::zeros(1, w)));
    let s = ParamStore(entries.into_iter().collect());
    let f = rand_mat(5, w, 7);
    let mut g = Graph::new(&s);
    let x = g.tape.leaf(f.clone());
    let layout = BlockLayout { order: vec![0, 1, 2, 3, 4], blocks: vec![(0, 2), (2, 5)] };
    let y = transformer_layer(&mut g, x, &layout, 2, "t").unwrap();
    assert_eq!(g.value(y), &f);
}

#[test]
fn pooling_with_own_parents_is_pointwise_linear() {
    let lv = level(&[[0, 0, 0], [2, 0, 0], [0, 4, 2]]);
    let (_, trace) = pool_level(&lv, 2);
    assert_eq!(trace.children.len(), 3);
    let (w, b, f) = (rand_mat(3, 2, 50), rand_mat(1, 2, 51), rand_mat(3, 3, 52));
    let s = store(&[("p.weight", w.clone()), ("p.bias", b.clone())]);
    let mut g = Graph::new(&s);
    let x = g.tape.leaf(f.clone());
    let y = grid_pool(&mut g, x, &trace, "p").unwrap();
    let expect = naive_affine(&f, &w, &b).gather_rows(&trace.children.iter().map(|c| c[0]).collect::<Vec<_>>());
    assert!(close(g.value(y), &expect, 1e-12));
}

#[test]
fn pooling_one_parent_takes_column_mean() {
    let lv = level(&[[0, 0, 0], [1, 0, 0], [1, 1, 1], [0, 1, 0]]);
    let (coarse, trace) = pool_level(&lv, 2);
    assert_eq!(coarse.len(), 1);
    let (w, b, f) = (rand_mat(3, 2, 53), rand_mat(1, 2, 54), rand_mat(4, 3, 55));
    let s = store(&[("p.weight", w.clone()), ("p.bias", b.clone())]);
    let mut g = Graph::new(&s);
    let x = g.tape.leaf(f.clone());
    let y = grid_pool(&mut g, x, &trace, "p").unwrap();
    let mean = Mat::from_vec(1, 3, (0..3).map(|c| (0..4).map(|r| f.get(r, c)).sum::<f64>() / 4.0).collect()).unwrap();
    assert!(close(g.value(y), &naive_affine(&mean, &w, &b), 1e-12));
}

fn unpool_store(zero_skip: bool) -> ParamStore<f64> {
    store(&[
        ("u.parent.weight", rand_mat(3, 3, 60)),
        ("u.parent.bias", rand_mat(1, 3, 61)),
        ("u.skip.weight", if zero_skip { Mat::zeros(3, 3) } else { rand_mat(3, 3, 62) }),
        ("u.skip.bias", Mat::zeros(1, 3)),
    ])
}

#[test]
fn unpool_restores_row_count_and_ignores_zero_skip() {
    let lv = level(&[[0, 0, 0], [1, 0, 0], [4, 4, 4], [5, 4, 4], [9, 0, 0]]);
    let (_, trace) = pool_level(&lv, 2);
    let s = unpool_store(true);
    let fine = rand_mat(5, 3, 63);
    let run = |skip: &Mat<f64>| {
        let mut g = Graph::new(&s);
        let x = g.tape.leaf(fine.clone());
        let c = grid_pool(&mut g, x, &trace, "u.parent").unwrap();
        let sk = g.tape.leaf(skip.clone());
        let y = grid_unpool(&mut g, c, sk, &trace, "u").unwrap();
        g.value(y).clone()
    };
    let a = run(&fine);
    assert_eq!(a.rows(), 5);
    assert_eq!(a, run(&rand_mat(5, 3, 64)));
    // children of one parent receive identical rows
    assert_eq!(a.row(0), a.row(1));
    assert_eq!(a.row(2), a.row(3));
}

#[test]
fn two_level_unpool_follows_composed_parents() {
    let lv = level(&[[0, 0, 0], [1, 0, 0], [2, 0, 0], [4, 0, 0], [7, 7, 7]]);
    let (mid, t1) = pool_level(&lv, 2);
    let (_, t2) = pool_level(&mid, 2);
    let s = store(&[
        ("u.parent.weight", identity(1)),
        ("u.parent.bias", Mat::zeros(1, 1)),
        ("u.skip.weight", Mat::zeros(1, 1)),
        ("u.skip.bias", Mat::zeros(1, 1)),
    ]);
    let top = Mat::from_vec(t2.children.len(), 1, (0..t2.children.len()).map(|i| i as f64).collect()).unwrap();
    let mut g = Graph::new(&s);
    let c = g.tape.leaf(top);
    let s1 = g.tape.leaf(Mat::zeros(mid.len(), 1));
    let m = grid_unpool(&mut g, c, s1, &t2, "u").unwrap();
    let s0 = g.tape.leaf(Mat::zeros(lv.len(), 1));
    let f = grid_unpool(&mut g, m, s0, &t1, "u").unwrap();
    for i in 0..lv.len() {
        assert_eq!(g.value(f).get(i, 0), t2.parent[t1.parent[i]] as f64);
    }
}

#[test]
fn config_validation() {
    assert!(ModelConfig::toy().validate().is_ok());
    assert!(ModelConfig::paper_scale().validate().is_ok());
    let mut c = ModelConfig::toy();
    c.heads = vec![3, 2, 2];
    assert!(matches!(ModelState::init(c, 0), Err(Error::Config(_))));
    let mut c = ModelConfig::toy();
    c.schemes.clear();
    assert!(c.validate().is_err());
    let mut c = ModelConfig::toy();
    c.decoder_depth = 1;
    assert!(c.validate().is_err());
}

#[test]
fn describe_counts_parameters() {
    let toy = ModelState::init(ModelConfig::toy(), 1).unwrap();
    let d = describe(&toy.config);
    assert_eq!(d.total, toy.param_count());
    assert_eq!(d.tensors, toy.params.len());
    assert!(d.total < 1_000_000);
    let big = describe(&ModelConfig::paper_scale());
    assert!(big.total > 10 * d.total);
    toy.validate().unwrap();
}

#[test]
fn state_validation_catches_mismatches() {
    let mut s = ModelState::init(ModelConfig::toy(), 1).unwrap();
    s.params.get_mut("cpe.bias").unwrap().data[0] = f32::NAN;
    assert!(matches!(s.validate(), Err(Error::NonFinite(_))));
    s.params.remove("cpe.bias");
    assert!(s.validate().is_err());
}

#[test]
fn forward_shape_and_determinism() {
    let state = ModelState::init(ModelConfig::toy(), 3).unwrap();
    let cloud = random_cloud(300, 4);
    let a = forward_with_plan(&cloud, &state).unwrap();
    assert_eq!(a.features.shape(), (a.plan.kept_len(), 32));
    assert!(a.features.all_finite());
    let copy = state.clone();
    assert_eq!(forward(&cloud, &copy).unwrap(), a.features);
}

#[test]
fn forward_permutes_with_input() {
    let state = ModelState::init(ModelConfig::toy(), 5).unwrap();
    // one point per voxel: place points on distinct voxel centers
    let mut rng = stream(6, &[]);
    let mut cells = alloc::collections::BTreeSet::new();
    while cells.len() < 150 {
        cells.insert([rng.random_range(0..25u32), rng.random_range(0..25u32), rng.random_range(0..25u32)]);
    }
    let pts: Vec<Point> = cells
        .iter()
        .map(|c| {
            Point::new(c.map(|v| (v as f64 + 0.5) * 0.02 - 0.25), [0.0, 0.0, 1.0], [rng.random(), 0.5, 0.2])
        })
        .collect();
    let cloud = PointCloud::new(pts).unwrap();
    let mut perm: Vec<usize> = (0..cloud.len()).collect();
    for i in (1..perm.len()).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let shuffled = cloud.permuted(&perm);
    let a = forward(&cloud, &state).unwrap();
    let b = forward(&shuffled, &state).unwrap();
    assert_eq!(a.rows(), cloud.len());
    for (i, &src) in perm.iter().enumerate() {
        assert_eq!(b.row(i), a.row(src));
    }
}

#[test]
fn intermediate_activations_stay_finite() {
    let state = ModelState::init(ModelConfig::toy(), 7).unwrap();
    for seed in 0..3 {
        let cloud = random_cloud(200, 100 + seed);
        let plan = Plan::new(&cloud, &state.config).unwrap();
        let store = state.store::<f32>();
        let mut g = Graph::new(&store);
        forward_graph(&mut g, &state.config, &plan, &cloud).unwrap();
        for i in 0..g.tape.len() {
            assert!(g.tape.value(crate::tape::Var(i)).all_finite());
        }
    }
}
