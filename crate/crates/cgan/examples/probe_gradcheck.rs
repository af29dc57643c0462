fn main() {
    let t0 = std::time::Instant::now();
    for r in ct2mr_cgan::check::generator_outcomes(64, 20, 8) {
        println!("{r}");
    }
    println!("generator: {:.1}s", t0.elapsed().as_secs_f32());
    let t1 = std::time::Instant::now();
    for r in ct2mr_cgan::check::discriminator_outcomes(64, 20, 8) {
        println!("{r}");
    }
    println!("discriminator: {:.1}s", t1.elapsed().as_secs_f32());
}
