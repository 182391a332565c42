"""Symptom-inquiry dialogue agents for disease diagnosis.

A generative model over partially observed symptom vectors (product of
per-symptom Gaussian experts), a masked-state diagnosis classifier, an
information-shaped reinforcement learning trainer, an evaluation harness
with reference baselines, and an HTTP consultation service.
"""

from .agent import (Agent, Critic, MlpActor, PoeActor, PolicyOutput,
                    actor_forward, build_critic_input, greedy_action,
                    init_actor_from_vae, masked_softmax, sample_action)
from .diagnoser import (Diagnoser, DiagnoserTrainConfig, state_from_obs,
                        train_diagnoser)
from .env import (Action, DialogueState, StepResult, legal_mask, reset, step)
from .errors import (CompatibilityError, SymcheckError, TrainingDivergedError,
                     UsageError, ValidationError)
from .evaluation import (EvalReport, baseline_full_observation,
                         baseline_random, evaluate, run_ablation,
                         top_k_accuracies)
from .knowledge import (DatasetSplit, KnowledgeBase, PatientRecord,
                        generate_dataset, load_dataset_dir,
                        load_knowledge_base, random_knowledge_base,
                        read_records, sample_patient, write_records)
from .rewards import (RewardConfig, diff, final_diagnosis,
                      hypothetical_positive, kl_onehot, shape_reward)
from .rollouts import (RolloutBuffer, TransitionRecord, collect_rollouts,
                       final_diagnosis_batch, greedy_rollouts)
from .training import (TrainerConfig, TrainResult, compute_gae,
                       decay_schedules, evaluate_accuracy, gae_advantages,
                       ppo_update, train)
from .vae import (GaussianLatent, PartialVae, VaeConfig, VaeTrainConfig,
                  obs_from_state, poe_combine, poe_posterior,
                  standard_normal_prior, train_vae)

__version__ = "0.1.0"
