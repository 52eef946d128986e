//! Reading the bundled MNIST files: digests, IDX headers, and a bit-exact
//! re-encoding.

use trgl::data::{mnist_dir, parse_idx, read_maybe_gz, serialize_idx, verify_digests, IdxData};

fn main() -> trgl::Result<()> {
    let dir = mnist_dir();
    println!("{} files match SHA256SUMS in {}", verify_digests(&dir)?, dir.display());
    for name in ["train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz"] {
        let bytes = read_maybe_gz(&dir.join(name))?;
        let (header, data) = parse_idx(&bytes)?;
        let same = serialize_idx(&header, &data)? == bytes;
        let what = match &data {
            IdxData::Images(px) => format!("{} pixels", px.len()),
            IdxData::Labels(ls) => format!("labels, first ten {:?}", &ls[..10]),
        };
        println!("{name}: magic 0x{:08x}, dims {:?}, {what}, re-encodes exactly: {same}", header.magic, header.dims);
    }
    Ok(())
}
