# Siamese 点云编码器
