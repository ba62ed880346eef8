use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ibgn_core::algebra::BaseRelation;
use ibgn_core::learning::{learn_structure, SamplerState};
use ibgn_core::{compose, compose_sets, sample_network, score_instance, ActionId, ClassModel, Instance, Interval};
use ibgn_core::{RelationSet, StructureMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const M: usize = 8;
const K: usize = 8;

fn model(structure: StructureMask) -> ClassModel {
    ClassModel {
        k_star: K,
        ell: K,
        alpha: vec![1.0; K],
        beta: vec![vec![0.5; M]; K],
        theta: vec![vec![1.0 / M as f64; M]; K],
        structure,
        phi: BTreeMap::new(),
        action_vocab: (0..M).map(|i| format!("a{i}")).collect(),
        size_histogram: BTreeMap::from([(K, 1)]),
    }
}

fn corpus(n: usize) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|_| {
            let mut intervals: Vec<Interval> = (0..rng.random_range(3..=K))
                .map(|_| {
                    let s = rng.random_range(0..20) as f64;
                    Interval::new(ActionId(rng.random_range(1..=M as u32)), s, s + rng.random_range(1..8) as f64)
                })
                .collect();
            intervals.sort_by(|a, b| a.times().partial_cmp(&b.times()).unwrap());
            let mut inst = Instance::new(Some(0), intervals);
            inst.sort_canonical();
            inst
        })
        .collect()
}

fn algebra(c: &mut Criterion) {
    let relations: Vec<BaseRelation> = (0..7).filter_map(BaseRelation::from_index).collect();
    c.bench_function("compose all pairs", |b| {
        b.iter(|| {
            for &r1 in &relations {
                for &r2 in &relations {
                    black_box(compose(r1, r2));
                }
            }
        })
    });
    let sets: Vec<RelationSet> = (1u8..128).filter_map(RelationSet::from_bits).collect();
    c.bench_function("compose_sets 127x127", |b| {
        b.iter(|| {
            for &x in &sets {
                for &y in &sets {
                    black_box(compose_sets(x, y).unwrap());
                }
            }
        })
    });
}

fn generation(c: &mut Criterion) {
    for (name, mask) in [("chain", StructureMask::chain(K)), ("full", StructureMask::full(K))] {
        let m = model(mask);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        c.bench_function(&format!("sample_network {name} k=8"), |b| {
            b.iter(|| black_box(sample_network(&m, K, &mut rng).unwrap()))
        });
    }
}

fn learning(c: &mut Criterion) {
    let data = corpus(200);
    let actions: Vec<Vec<usize>> =
        data.iter().map(|i| i.actions().map(|a| a.vocab_index().unwrap()).collect()).collect();
    c.bench_function("gibbs sweep 200 instances", |b| {
        let mut init_rng = ChaCha8Rng::seed_from_u64(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        b.iter_batched(
            || {
                let mut s = SamplerState::new(actions.clone(), K, M, 1.0, 0.5);
                s.initialize(&mut init_rng);
                s
            },
            |mut s| {
                s.sweep(&mut rng);
                s
            },
            BatchSize::SmallInput,
        )
    });
    c.bench_function("learn_structure 200 instances", |b| b.iter(|| black_box(learn_structure(&data, M).unwrap())));

    let m = model(StructureMask::full(K));
    c.bench_function("score 200 instances", |b| {
        b.iter(|| data.iter().map(|i| score_instance(&m, i).unwrap()).sum::<f64>())
    });
}

criterion_group!(benches, algebra, generation, learning);
criterion_main!(benches);
