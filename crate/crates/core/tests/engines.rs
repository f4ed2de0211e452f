//! The compiled fast path against the channel-level device model, and
//! locality of single faults.

mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use onn_trojan_sim::accelerator::{
    layer_forward_via_accelerator, map_model, Accelerator, AcceleratorConfig, BlockConfig, CompiledNetwork,
    DeviceLevel, FaultedAccelerator, MrId,
};
use onn_trojan_sim::nn::{forward_with, reference_forward, Conv2d, Layer, Model, Tensor};
use onn_trojan_sim::photonics::MrState;

fn small_accelerator() -> Accelerator {
    let block = |units, banks, width| BlockConfig {
        units,
        banks_per_unit: banks,
        bank_width: width,
        units_per_row: 2,
        channel_count: None,
    };
    Accelerator::build(AcceleratorConfig {
        conv: block(2, 2, 4),
        fc: block(2, 3, 5),
        ..AcceleratorConfig::default()
    })
    .unwrap()
}

fn weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}

/// conv -> relu -> flatten -> fc -> relu -> fc, sized from `seed`.
fn random_model(seed: u64) -> (Model, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, h) = (rng.gen_range(1..3), rng.gen_range(4..7));
    let (k, out_ch, pad) = (rng.gen_range(2..4), rng.gen_range(1..4), rng.gen_range(0..2));
    let oh = h + 2 * pad - k + 1;
    let flat = out_ch * oh * oh;
    let hidden = rng.gen_range(2..9);
    let classes = rng.gen_range(2..5);
    let conv = Layer::Conv2d(Conv2d {
        name: "conv".into(),
        in_ch: c,
        out_ch,
        kernel_h: k,
        kernel_w: k,
        stride: 1,
        padding: pad,
        weight: weights(&mut rng, out_ch * c * k * k),
        bias: Some(weights(&mut rng, out_ch)),
    });
    let fc1 = common::linear("fc1", flat, hidden, weights(&mut rng, flat * hidden));
    let fc2 = common::linear("fc2", hidden, classes, weights(&mut rng, hidden * classes));
    let layers = vec![conv, Layer::Relu, Layer::Flatten, fc1, Layer::Relu, fc2];
    let m = common::model(vec![c, h, h], classes, layers);
    let input = Tensor::new(vec![c, h, h], weights(&mut rng, c * h * h)).unwrap();
    (m, input)
}

fn random_faults(acc: &Accelerator, seed: u64, count: usize) -> FaultedAccelerator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut facc = FaultedAccelerator::healthy(acc.clone());
    for _ in 0..count {
        let id = MrId(rng.gen_range(0..acc.mr_count() as u32));
        let width = acc.grid_of(id).channel_count;
        let state = if rng.gen_bool(0.5) {
            MrState::OffResonance
        } else {
            let channel = rng.gen_range(0..=width);
            MrState::Shifted {
                delta_t: 1.0,
                shift_nm: 0.8,
                channel: (channel < width).then_some(channel),
            }
        };
        facc.set_state(id, state);
    }
    facc
}

fn assert_close(a: &Tensor, b: &Tensor) {
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() <= 1e-4 * y.abs().max(1.0), "{x} vs {y}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compiled_matches_device_level(seed in any::<u64>(), faults in 0usize..40) {
        let acc = small_accelerator();
        let (model, input) = random_model(seed);
        let plan = map_model(&model, &acc).unwrap();
        let facc = random_faults(&acc, seed, faults);
        let net = CompiledNetwork::new(&model, &plan, &facc).unwrap();
        let fast = forward_with(&model, &input, &net).unwrap();
        let slow = forward_with(&model, &input, &DeviceLevel { plan: &plan, facc: &facc }).unwrap();
        assert_close(&fast, &slow);
    }

    #[test]
    fn healthy_accelerator_matches_reference(seed in any::<u64>()) {
        let acc = small_accelerator();
        let (model, input) = random_model(seed);
        let plan = map_model(&model, &acc).unwrap();
        let facc = FaultedAccelerator::healthy(acc);
        let want = reference_forward(&model, &input).unwrap();
        assert_close(&forward_with(&model, &input, &DeviceLevel { plan: &plan, facc: &facc }).unwrap(), &want);
        let net = CompiledNetwork::new(&model, &plan, &facc).unwrap();
        prop_assert_eq!(net.corrupted_slots(), 0);
        assert_close(&forward_with(&model, &input, &net).unwrap(), &want);
    }

    #[test]
    fn single_fault_only_touches_neurons_on_its_bank(seed in any::<u64>(), mr in 0u32..10_000) {
        let acc = small_accelerator();
        let (model, _) = random_model(seed);
        let plan = map_model(&model, &acc).unwrap();
        let id = MrId(mr % acc.mr_count() as u32);
        let mut facc = FaultedAccelerator::healthy(acc.clone());
        facc.set_state(id, MrState::OffResonance);
        let coord = acc.coordinate(id);
        let healthy = FaultedAccelerator::healthy(acc);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for mapping in &plan.layers {
            let layer = &model.layers[mapping.layer_index];
            let shape: Vec<usize> = match layer {
                Layer::Conv2d(c) => {
                    let h = model.input_shape[1];
                    vec![c.in_ch, h, h]
                }
                _ => vec![mapping.fan_in],
            };
            let n: usize = shape.iter().product();
            let x = Tensor::new(shape, weights(&mut rng, n)).unwrap();
            let a = layer_forward_via_accelerator(layer, mapping.layer_index, &x, &plan, &facc).unwrap();
            let b = layer_forward_via_accelerator(layer, mapping.layer_index, &x, &plan, &healthy).unwrap();
            let per_neuron = a.len() / mapping.neurons;
            for neuron in 0..mapping.neurons {
                let on_bank = mapping.block == coord.block
                    && mapping.neuron_tiles(neuron).iter().any(|t| {
                        t.unit as usize == coord.unit && t.bank as usize == coord.bank && coord.column < t.len as usize
                    });
                if !on_bank {
                    let r = neuron * per_neuron..(neuron + 1) * per_neuron;
                    prop_assert_eq!(&a.data()[r.clone()], &b.data()[r]);
                }
            }
        }
    }
}
