fn main() {
    println!("doseflow");
}
