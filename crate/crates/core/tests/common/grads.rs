//! Central-difference gradient checks for every tape op and both architectures.

use super::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparsekit::autodiff::ConvGeom;
use sparsekit::models::{ForwardCtx, Mode};
use sparsekit::structured::{InnerKind, KConvSpec, MapSpec};
use sparsekit::Tensor;

fn check(name: &str, err: f64) -> (String, f64) {
    (name.to_string(), err)
}

pub fn elementwise_and_linear_ops(out: &mut Vec<(String, f64)>) {
    let a = random_tensor(&[3, 4], 1);
    let b = random_tensor(&[3, 4], 2);
    let w = random_tensor(&[5, 4], 3);
    let m = random_tensor(&[4, 2], 4);
    let bias = random_tensor(&[5], 6);
    out.push(check("add", gradcheck_op(&[a.clone(), b.clone()], |t, v| t.add(v[0], v[1]))));
    out.push(check("mul", gradcheck_op(&[a.clone(), b.clone()], |t, v| t.mul(v[0], v[1]))));
    out.push(check("affine", gradcheck_op(std::slice::from_ref(&a), |t, v| Ok(t.affine(v[0], -1.5, 0.25)))));
    out.push(check("scale", gradcheck_op(std::slice::from_ref(&a), |t, v| Ok(t.scale(v[0], 3.0)))));
    out.push(check("abs", gradcheck_op(std::slice::from_ref(&a), |t, v| Ok(t.abs(v[0])))));
    out.push(check("relu", gradcheck_op(std::slice::from_ref(&a), |t, v| Ok(t.relu(v[0])))));
    out.push(check("pswish", gradcheck_op(std::slice::from_ref(&a), |t, v| Ok(t.pswish(v[0], 2.5)))));
    out.push(check("sum", gradcheck_op(std::slice::from_ref(&a), |t, v| Ok(t.sum(v[0])))));
    out.push(check("matmul", gradcheck_op(&[a.clone(), m], |t, v| t.matmul(v[0], v[1]))));
    out.push(check("linear", gradcheck_op(&[a.clone(), w.clone()], |t, v| t.linear(v[0], v[1]))));
    out.push(check(
        "bias_add",
        gradcheck_op(&[a.clone(), w, bias], |t, v| {
            let y = t.linear(v[0], v[1])?;
            t.bias_add(y, v[2])
        }),
    ));
    out.push(check("reshape", gradcheck_op(std::slice::from_ref(&a), |t, v| t.reshape(v[0], &[2, 6]))));
    out.push(check(
        "dropout",
        gradcheck_op(&[a], |t, v| t.dropout(v[0], 0.3, &mut ChaCha8Rng::seed_from_u64(8))),
    ));
}

pub fn cross_entropy(out: &mut Vec<(String, f64)>) {
    let logits = random_tensor(&[4, 5], 11);
    let mut target = Tensor::full(&[4, 5], 0.05);
    for r in 0..4 {
        target.data_mut()[r * 5 + r] = 0.8;
    }
    out.push(check(
        "softmax_cross_entropy",
        gradcheck_op(&[logits], move |t, v| t.softmax_cross_entropy(v[0], &target)),
    ));
}

pub fn spatial_ops(out: &mut Vec<(String, f64)>) {
    let x = random_tensor(&[2, 3, 6, 6], 21);
    let w = random_tensor(&[4, 3, 3, 3], 22);
    let b = random_tensor(&[4], 23);
    out.push(check("conv2d", gradcheck_op(&[x.clone(), w.clone()], |t, v| t.conv2d(v[0], v[1], 1, 1))));
    out.push(check(
        "conv2d stride 2",
        gradcheck_op(&[random_tensor(&[1, 3, 7, 7], 26), w], |t, v| t.conv2d(v[0], v[1], 2, 0)),
    ));
    out.push(check(
        "bias_add 4d",
        gradcheck_op(&[random_tensor(&[2, 4, 3, 3], 24), b], |t, v| t.bias_add(v[0], v[1])),
    ));
    out.push(check("max_pool2d", gradcheck_op(std::slice::from_ref(&x), |t, v| t.max_pool2d(v[0], 2))));
    out.push(check("resize down", gradcheck_op(std::slice::from_ref(&x), |t, v| t.resize(v[0], &[2, 5, 3, 3]))));
    out.push(check("resize up", gradcheck_op(&[x], |t, v| t.resize(v[0], &[2, 2, 8, 8]))));
    out.push(check(
        "resize 2d",
        gradcheck_op(&[random_tensor(&[3, 7], 25)], |t, v| t.resize(v[0], &[3, 4])),
    ));
}

fn twiddle_inputs(spec: &MapSpec, seed: u64) -> Vec<Tensor> {
    let levels = spec.levels();
    (0..spec.num_butterflies())
        .map(|i| random_tensor(&[levels, spec.n / 2, 2, 2], seed + i as u64))
        .collect()
}

pub fn structured_ops(out: &mut Vec<(String, f64)>) {
    for (inp, out_dim, inner) in [
        (8, 8, InnerKind::Butterfly),
        (12, 5, InnerKind::Butterfly),
        (5, 12, InnerKind::Kaleidoscope { width: 2 }),
    ] {
        let spec = MapSpec::new(inp, out_dim, inner).unwrap();
        let mut inputs = vec![random_tensor(&[3, inp], 31)];
        inputs.extend(twiddle_inputs(&spec, 40));
        out.push(check(
            &format!("structured_map {inp}->{out_dim}"),
            gradcheck_op(&inputs, move |t, v| t.structured_map(v[0], &v[1..], spec)),
        ));
    }
    let spec = KConvSpec::new(ConvGeom::new(2, 3, 3, 1, 1), 1).unwrap();
    let mut inputs = vec![random_tensor(&[2, 2, 4, 4], 51)];
    inputs.extend(twiddle_inputs(&spec.map, 60));
    out.push(check("kconv2d", gradcheck_op(&inputs, move |t, v| t.kconv2d(v[0], &v[1..], spec))));
}

pub fn fc6_width8_architectures(out: &mut Vec<(String, f64)>) {
    let ctx_train = ForwardCtx::train(3);
    let dense = build(&fc6_config(8, [1, 4, 4], 3));
    out.push(check("fc6 dense", gradcheck_model(&dense, 4, &ctx_train)));
    let head = build(&fc6_config(8, [1, 4, 4], 3).with_head(sparsekit::models::HeadKind::Butterfly));
    out.push(check("fc6 butterfly head", gradcheck_model(&head, 4, &ctx_train)));
    let fact = build(&fc6_config(8, [1, 4, 4], 3).fully_factorized());
    out.push(check("fc6 factorized", gradcheck_model(&fact, 4, &ctx_train)));
    let soft = build(&with_pswish(fc6_config(8, [1, 4, 4], 3)));
    let ctx = ForwardCtx {
        mode: Mode::Train,
        beta: 3.0,
        gamma: 0.5,
        dropout_seed: 4,
    };
    out.push(check("fc6 pswish + soft skip", gradcheck_model(&soft, 4, &ctx)));
}

pub fn micro_vgg_architectures(out: &mut Vec<(String, f64)>) {
    let ctx = ForwardCtx::train(9);
    let dense = build(&micro_vgg_config());
    out.push(check("micro vgg dense", gradcheck_model(&dense, 2, &ctx)));
    let fact = build(&micro_vgg_config().fully_factorized());
    out.push(check("micro vgg factorized", gradcheck_model(&fact, 2, &ctx)));
    let skip = ForwardCtx {
        gamma: 0.7,
        ..ForwardCtx::eval()
    };
    out.push(check("micro vgg soft skip", gradcheck_model(&build(&with_pswish(micro_vgg_config())), 2, &skip)));
}
