from .artifact import PolicyArtifact, TrainReport, evaluate, load_q_table, save_q_table
from .dqn import DQNConfig, dqn_train
from .mlp import Adam, Mlp, Sgd, mlp_backward, mlp_forward
from .ppo import PPOConfig, mappo_train, ppo_train
from .tabular import QLearningConfig, tabular_q
