//! How the gate mixes an item's projected image and text vectors.

use mmrec::model::{gated_fusion, init_params, ModelDims};

fn main() -> mmrec::Result<()> {
    let dims = ModelDims {
        n_users: 1,
        n_items: 1,
        d: 4,
        d_img: 1,
        d_txt: 1,
        h: 1,
    };
    let mut params = init_params(dims, 3)?;
    let image = [1.0, 0.0, 2.0, 0.5];
    let text = [0.0, 1.0, 2.0, 1.5];

    let (g, z) = gated_fusion(&params, &image, &text)?;
    println!("random gate   g = {:.3?}\n              z = {:.3?}", g.0, z.0);

    // A zero weight matrix leaves the bias in charge.
    params.gate_w.as_mut_slice().fill(0.0);
    for bias in [50.0, 0.0, -50.0] {
        params.gate_b.iter_mut().for_each(|b| *b = bias);
        let (g, z) = gated_fusion(&params, &image, &text)?;
        println!("bias {bias:>5}    g = {:.3?}\n              z = {:.3?}", g.0, z.0);
    }
    Ok(())
}
