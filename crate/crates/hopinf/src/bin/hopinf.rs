use std::time::Instant;
use nalgebra::DMatrix;

fn main() {
    for n in [500usize, 1000, 2304] {
        let a = DMatrix::<f64>::from_fn(n, n, |i, j| ((i * 31 + j * 17) % 97) as f64 / 97.0 + if i == j { 2.0 } else { 0.0 });
        let b = DMatrix::<f64>::from_element(n, 1, 1.0);
        let t = Instant::now();
        let lu = a.clone().lu();
        let tf = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let _x = lu.solve(&b).unwrap();
        let ts = t.elapsed().as_secs_f64();
        println!("LU n={n}: factor {tf:.3}s solve {ts:.5}s");
    }
    let m = DMatrix::<f64>::from_fn(1024, 2001, |i, j| ((i * 13 + j * 7) % 101) as f64 / 101.0);
    let t = Instant::now();
    let svd = m.svd(true, true);
    println!("SVD 1024x2001: {:.3}s  (sigma0={:.3e})", t.elapsed().as_secs_f64(), svd.singular_values[0]);
    let q = DMatrix::<f64>::from_fn(64, 64, |i, j| ((i * 3 + j * 5) % 11) as f64);
    let qs = (&q + q.transpose()) * 0.5;
    let t = Instant::now();
    for _ in 0..100 { let _e = nalgebra::SymmetricEigen::new(qs.clone()); }
    println!("SymEig 64 x100: {:.4}s", t.elapsed().as_secs_f64());
    let a = DMatrix::<f64>::from_fn(600, 600, |i, j| ((i + j) % 7) as f64);
    let t = Instant::now();
    let _c = &a * &a;
    println!("gemm 600: {:.4}s", t.elapsed().as_secs_f64());
}
