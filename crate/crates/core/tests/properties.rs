mod common;

use proptest::prelude::*;
use subnav::chunker::{chunk_instruction, find_boundaries, find_conj_boundaries, ChunkingConfig};
use subnav::metrics::{dtw_idx, evaluate_idx, ndtw_from_dtw, SUCCESS_THRESHOLD};
use subnav::rng::seeded;

use common::{brute_dtw, brute_shortest, oracle_boundaries, random_graph, random_parse, random_walk};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn boundaries_match_the_replay_oracle(seed in any::<u64>()) {
        let p = random_parse(&mut seeded(seed), 12);
        prop_assert_eq!(find_boundaries(&p), oracle_boundaries(&p));
    }

    #[test]
    fn chunks_cover_every_content_token(seed in any::<u64>(), min_words in 1usize..5) {
        let p = random_parse(&mut seeded(seed), 12);
        let config = ChunkingConfig { min_chunk_words: min_words, ..Default::default() };
        let chunks = chunk_instruction(&p, &config).unwrap();
        let content: Vec<usize> = p.tokens().filter(|(_, t)| !t.is_punct()).map(|(f, _)| f.global).collect();
        let spans: Vec<usize> = chunks.iter().flat_map(|c| c.span.clone()).collect();
        prop_assert_eq!(spans, content);
        for (i, c) in chunks.iter().enumerate() {
            prop_assert_eq!(c.id, i + 1);
            prop_assert!(!c.words.is_empty());
        }
        prop_assert_eq!(chunk_instruction(&p, &config).unwrap(), chunks);
    }

    #[test]
    fn conj_list_is_ascending(seed in any::<u64>()) {
        let p = random_parse(&mut seeded(seed), 12);
        let l = find_conj_boundaries(&p);
        prop_assert!(l.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn dijkstra_matches_path_enumeration(seed in any::<u64>(), n in 2usize..9) {
        let g = random_graph(&mut seeded(seed), n, 0.35, false);
        for a in 0..n {
            for b in 0..n {
                let fast = g.dist_idx(a, b);
                let slow = brute_shortest(&g, a, b);
                if slow.is_infinite() {
                    prop_assert!(fast.is_infinite());
                } else {
                    prop_assert!((fast - slow).abs() < 1e-9);
                }
                prop_assert_eq!(fast, g.dist_idx(b, a));
                for c in 0..n {
                    prop_assert!(g.dist_idx(a, c) <= fast + g.dist_idx(b, c) + 1e-9);
                }
            }
        }
    }

    #[test]
    fn shortest_paths_are_walkable(seed in any::<u64>(), n in 2usize..9) {
        let g = random_graph(&mut seeded(seed), n, 0.3, true);
        for b in 0..n {
            let path = g.shortest_path(0, b).unwrap();
            prop_assert_eq!(path[0], 0);
            prop_assert_eq!(*path.last().unwrap(), b);
            let len = g.path_length_idx(&path).unwrap();
            prop_assert!((len - g.dist_idx(0, b)).abs() < 1e-9);
        }
    }

    #[test]
    fn dtw_matches_alignment_enumeration(seed in any::<u64>(), lt in 1usize..7, lr in 1usize..7) {
        let mut rng = seeded(seed);
        let g = random_graph(&mut rng, 6, 0.3, true);
        let t = random_walk(&mut rng, &g, 0, lt);
        let r = random_walk(&mut rng, &g, 5, lr);
        prop_assert!((dtw_idx(&g, &t, &r) - brute_dtw(&g, &t, &r)).abs() < 1e-9);
    }

    #[test]
    fn metric_invariants(seed in any::<u64>(), lt in 1usize..9, lr in 1usize..9) {
        let mut rng = seeded(seed);
        let g = random_graph(&mut rng, 7, 0.25, true);
        let t = random_walk(&mut rng, &g, 0, lt);
        let r = random_walk(&mut rng, &g, 0, lr);
        let e = evaluate_idx(&g, &t, &r, SUCCESS_THRESHOLD).unwrap();
        prop_assert!((0.0..=1.0).contains(&e.ndtw));
        prop_assert!(e.spl <= f64::from(u8::from(e.success)));
        prop_assert!(!e.success || e.oracle_success);
        let same = evaluate_idx(&g, &r, &r, SUCCESS_THRESHOLD).unwrap();
        prop_assert_eq!(same.ndtw, 1.0);
        prop_assert_eq!(dtw_idx(&g, &t, &t), 0.0);
        prop_assert_eq!(ndtw_from_dtw(0.0, r.len(), SUCCESS_THRESHOLD), 1.0);
    }
}
