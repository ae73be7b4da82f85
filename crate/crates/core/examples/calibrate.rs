use vflsim_core::harness::{parse_config, run_experiment};

fn config(emb: usize, top: &str, lr: f64, epochs: usize, defense_block: &str) -> String {
    format!(r#"
[dataset]
kind = "synthetic"
n = 2000
d = 16
classes = 4
cluster_separation = 4.0
noise_std = 1.5

[split]
parties = 2

[model]
embedding_dim = {emb}
bottom_hidden = [16]
top_hidden = {top}

[sgd]
learning_rate = {lr}
batch_size = 16
epochs = {epochs}

{defense_block}

[attack]
kind = "passive"
[attack.passive]
aux_per_class = 5
head_hidden = [16]
head_epochs = 300
eval_split = 0.5

[evaluation]
metric = "top1"
seeds = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
"#)
}

fn ladsg(k: usize, eps: f64) -> String {
    format!("[defense.sgsub]\n[defense.ladistill]\nk = {k}\nepsilon = {eps}\n[defense.geno]\n")
}

fn main() {
    for (emb, top, lr, epochs) in [
        (2usize, "[64]", 0.1, 50usize),
        (2, "[64, 32]", 0.1, 50),
        (2, "[32]", 0.1, 80),
        (2, "[64]", 0.1, 80),
    ] {
        let undef = run_experiment(&parse_config(&config(emb, top, lr, epochs, "")).unwrap()).unwrap();
        let u_task = undef.aggregate.task_metric_mean;
        let u_att = undef.aggregate.attack_success_mean.unwrap();
        println!("== emb={emb} top={top} lr={lr} E={epochs}: undef task={u_task:.3} att={u_att:.3}");
        for eps in [0.5, 0.55] {
            let d = run_experiment(&parse_config(&config(emb, top, lr, epochs, &ladsg(3, eps))).unwrap()).unwrap();
            println!("   ladsg(k=3,eps={eps}): task={:.3} att={:.3} | drop={:+.3} util_loss={:+.3}",
                d.aggregate.task_metric_mean, d.aggregate.attack_success_mean.unwrap(),
                u_att - d.aggregate.attack_success_mean.unwrap(), u_task - d.aggregate.task_metric_mean);
        }
    }
}
