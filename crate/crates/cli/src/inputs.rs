use std::fs;
use std::path::PathBuf;

use penetra::{blob_image, derive_seed, write_pgm, write_tensor, Tensor};

use crate::args::MakeInputsArgs;
use crate::bench::INPUT_EXTENSION;
use crate::error::{CliError, Result};
use crate::spec::parse_hw;

/// Seed of the `i`-th synthetic input.
pub fn input_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, &format!("input/{i}"))
}

pub fn input_name(i: usize) -> String {
    format!("input_{i:03}.{INPUT_EXTENSION}")
}

/// Writes `count` synthetic images and returns their paths.
pub fn make_inputs(args: &MakeInputsArgs) -> Result<Vec<PathBuf>> {
    let (h, w) =
        parse_hw(&args.size).ok_or_else(|| CliError::Usage(format!("bad size {:?}", args.size)))?;
    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    (0..args.count)
        .map(|i| {
            let img = blob_image(input_seed(args.seed, i), h, w)?;
            let path = args.out_dir.join(input_name(i));
            write_tensor(&path, &img)?;
            if args.pgm {
                let first = Tensor::new(vec![1, h, w], img.data()[..h * w].to_vec())?;
                write_pgm(path.with_extension("pgm"), &first)?;
            }
            Ok(path)
        })
        .collect()
}
