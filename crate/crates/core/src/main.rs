fn main() {
    println!("usage: bergmono <analyze|monodromy|operators|decompose> --input <file.json> [--out <dir>]");
}
