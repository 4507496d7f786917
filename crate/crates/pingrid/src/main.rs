fn main() {
    println!("pingrid");
}
