//! The small running example: four word vectors, two tuples.

use erdr::blocking::{hash_code, tune_params, HyperplaneFamily, TuningGoal};
use erdr::compose::{compose_avg, TupleDr};
use erdr::data::parse_table;
use erdr::embeddings::{parse_embedding_text, WordVectors};
use erdr::similarity::{sim_cosine_per_attr, sim_difference, sim_hadamard};

const VECTORS: &str = "Bill 0.4 0.8 0.9\nWilliam 0.3 0.9 0.7\nGates 0.5 0.8 0.8\nSeattle 0.1 0.1 0.2\n";
const TABLE: &str = "id,Name,City\nt1,Bill Gates,Seattle\nt2,William Gates,Seattle\n";

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn unk_is_the_mean_vector() {
    let d = parse_embedding_text(VECTORS.as_bytes()).unwrap();
    assert!(close(d.unk(), &[0.325, 0.65, 0.65], 1e-12));
    assert!(close(d.vector("xyzzy"), d.unk(), 0.0));
    assert_eq!(d.lookup("SEATTLE"), &[0.1, 0.1, 0.2]);
    assert!(close(d.lookup(""), d.unk(), 0.0));
}

#[test]
fn averaged_tuples_and_per_attribute_cosine() {
    let d = parse_embedding_text(VECTORS.as_bytes()).unwrap();
    let t = parse_table(TABLE, "id").unwrap();
    let t1 = compose_avg(t.get("t1").unwrap(), &d);
    let t2 = compose_avg(t.get("t2").unwrap(), &d);
    assert!(close(t1.attribute(0).unwrap(), &[0.45, 0.8, 0.85], 1e-12));
    assert!(close(t2.attribute(0).unwrap(), &[0.4, 0.85, 0.75], 1e-12));
    assert!(close(t1.attribute(1).unwrap(), &[0.1, 0.1, 0.2], 1e-12));

    let s = sim_cosine_per_attr(&t1, &t2).unwrap().values;
    // 1.4975 / sqrt(1.565 · 1.445)
    let name = 1.4975 / (1.565f64 * 1.445).sqrt();
    assert!((s[0] - name).abs() < 1e-12);
    assert!((s[0] - 0.9958).abs() < 1e-4);
    assert!((s[1] - 1.0).abs() < 1e-12);
    let truncated: Vec<f64> = s.iter().map(|x| (x * 100.0).floor() / 100.0).collect();
    assert_eq!(truncated, [0.99, 1.0]);
}

#[test]
fn difference_and_product_of_composed_vectors() {
    let a = TupleDr::composed(vec![0.45, 0.23]);
    let b = TupleDr::composed(vec![0.42, 0.28]);
    assert!(close(&sim_difference(&a, &b).unwrap().values, &[0.03, -0.05], 1e-12));
    assert!(close(&sim_hadamard(&a, &b).unwrap().values, &[0.189, 0.0644], 1e-12));
}

#[test]
fn both_name_vectors_share_a_bucket() {
    let normals = vec![-1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
    let f = HyperplaneFamily::from_normals(3, 4, 1, normals).unwrap();
    let c1 = hash_code(&[0.45, 0.8, 0.85], f.planes(0), 4).unwrap();
    let c2 = hash_code(&[0.4, 0.85, 0.75], f.planes(0), 4).unwrap();
    assert_eq!(c1.signs(), [1, 1, -1, -1]);
    assert_eq!(c1, c2);
}

#[test]
fn tuned_parameters_for_a_2616_tuple_table() {
    assert_eq!(tune_params(&TuningGoal { p1: 0.95, p2: 0.5, n: 2616 }).unwrap(), (12, 2));
    assert_eq!(tune_params(&TuningGoal { p1: 0.9, p2: 0.5, n: 1000 }).unwrap(), (10, 3));
    assert!(tune_params(&TuningGoal { p1: 0.5, p2: 0.5, n: 10 }).is_err());
}
